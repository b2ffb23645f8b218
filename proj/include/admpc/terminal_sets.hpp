#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "admpc/lmi.hpp"
#include "admpc/model.hpp"

namespace admpc {

/// Intersection of halfspaces {x : A_f x <= b_f}; b_f >= 0 so the origin is
/// always a member.
struct PolyhedralSet {
  MatrixXd A_f;
  VectorXd b_f;
};

/// Sublevel set {x : x' Z x <= alpha} of a positive definite quadratic.
struct EllipsoidalSet {
  MatrixXd Z;
  double alpha = 0.0;
};

struct GilbertTanOptions {
  int power_cap = 500;       // max number of closed-loop powers added
  int max_dim = 12;          // guard against accidental large-n calls
  double redundancy_tol = 1e-9;
};

/// Largest level alpha* for which {x' P_c x <= alpha*} satisfies every
/// constraint row, state rows G x <= g and input rows (H K_c) x <= h:
/// alpha* = min_rows c^2 / (a' P_c^{-1} a). Rows with vanishing normal never
/// bind and are skipped.
double max_ellipsoid(const CentralizedTerminal& ct, const LtiSystem& sys);

/// Maximal constraint-admissible invariant set of x+ = A_K x inside
/// {C x <= c}: rows C A_K^k x <= c accumulate until one more power adds only
/// rows that are redundant over the current set (one LP per row), then a
/// final pass drops redundant rows. Throws NotStable when the spectral
/// radius is >= 1, OriginNotInterior when some c <= 0, IterationCapExceeded
/// past opts.power_cap, and BuildError when {Cx <= c} is unbounded or the
/// dimension exceeds opts.max_dim.
PolyhedralSet gilbert_tan(const MatrixXd& A_K, const MatrixXd& C, const VectorXd& c,
                          const GilbertTanOptions& opts = {});

bool contains(const PolyhedralSet& set, const VectorXd& x, double tol = 1e-9);
bool contains(const EllipsoidalSet& set, const VectorXd& x, double tol = 1e-9);

/// Numeric values of one solved adaptive-terminal instance.
struct AdaptiveLevels {
  VectorXd beta;             // per subsystem, alpha_i = beta_i^2
  std::vector<MatrixXd> Y;   // m_i x n_Ni scaled gains
  std::vector<MatrixXd> K;   // recovered gains K_Ni
};

/// Reads (beta, Y) out of a solver vector by the allocation layout and
/// recovers the gains (reference columns wherever a level vanished).
AdaptiveLevels read_adaptive_levels(const CoupledSystem& cs,
                                    const DistributedTerminalDesign& design,
                                    const AdaptiveVarLayout& vars, const VectorXd& x,
                                    double gain_tol = 1e-9);

/// Worst observed violations over sampled members of the product family
/// {x_i' Z_i x_i <= beta_i^2}. Negative entries mean the condition held with
/// margin everywhere.
struct ValidationReport {
  double invariance = 0.0;        // x_i+' Z_i x_i+ - beta_i^2
  double state = 0.0;             // G x - g
  double input = 0.0;             // H u - h
  double decrease_sum = 0.0;      // sum_i V_i(x_i+) - V_i(x_i) + stage_i
  double decrease_weighted = 0.0; // same sum with 1/beta_i weights
  int samples = 0;
};

/// Samples the boundary of the product set (one subsystem on its ellipsoid
/// boundary per draw, the rest uniform inside theirs; every fourth draw puts
/// all blocks on their boundaries, the extreme points that maximize the
/// convex per-subsystem conditions), steps the closed loop once under the
/// recovered gains, and reports the worst violation of each. The decrease
/// sums are indefinite in x, so interior mixes matter for them.
/// Deterministic per seed.
ValidationReport verify_invariance_sampled(const CoupledSystem& cs,
                                           const DistributedTerminalDesign& design,
                                           const AdaptiveLevels& levels, int n_samples,
                                           std::uint64_t seed);

/// Largest fixed levels jointly certified by the adaptive conditions without
/// a terminal point: maximizes sum_i beta_i subject to C1-C5 and returns the
/// solved levels. These seed the fixed-set controller variants.
AdaptiveLevels fixed_levels_design(const CoupledSystem& cs,
                                   const DistributedTerminalDesign& design,
                                   const ToleranceConfig& tol = adaptive_tolerance());

}  // namespace admpc
