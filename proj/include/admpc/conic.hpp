#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "admpc/error.hpp"

namespace admpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ConeKind { Zero, Nonneg, SecondOrder, Psd };

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalTrouble };

const char* to_string(SolveStatus status);

struct ToleranceConfig {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iters = 200;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalTrouble;
  VectorXd x;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

// Scaled symmetric vectorization. Off-diagonal entries carry a sqrt(2)
// factor so that dot(svec(A), svec(B)) = trace(A*B). Order is column-major
// over the lower triangle.
int svec_len(int d);
int svec_index(int r, int c, int d);  // requires r >= c
VectorXd svec(const MatrixXd& M);
MatrixXd smat(const VectorXd& v);

/// Smallest eigenvalue of a symmetric matrix; callers compare against their
/// own tolerance to decide whether M is (numerically) PSD.
double psd_residual(const MatrixXd& M);

/// Linear objective over affine expressions constrained to cones. Each block
/// holds an expression e(x) = const + C*x read as:
///   Zero:        e(x) = 0
///   Nonneg:      e(x) >= 0 componentwise
///   SecondOrder: e_0(x) >= || e_1..end(x) ||_2
///   Psd:         the symmetric matrix M(x) with svec(M) = e is PSD
/// Psd blocks are written entrywise through add_psd_* with r >= c; the
/// builder applies the svec scaling internally.
class ConicProblem {
 public:
  struct Triplet {
    int row;
    int var;
    double coeff;
  };

  struct Block {
    ConeKind kind = ConeKind::Zero;
    int rows = 0;    // expression length (svec length for Psd)
    int matdim = 0;  // matrix side, Psd only
    std::vector<double> constants;
    std::vector<Triplet> triplets;
  };

  /// Appends `count` scalar variables, returning the index of the first.
  int add_vars(int count);
  int num_vars() const { return nvar_; }

  /// Accumulates `coeff * x_var` into the minimized objective.
  void add_objective(int var, double coeff);
  const std::vector<double>& objective() const { return c_; }

  int begin_block(ConeKind kind, int rows);
  int begin_psd_block(int matdim);
  void add_coeff(int row, int var, double coeff);
  void add_constant(int row, double value);
  void add_psd_coeff(int r, int c, int var, double coeff);
  void add_psd_constant(int r, int c, double value);
  void end_block();

  const std::vector<Block>& blocks() const { return blocks_; }

  /// Evaluates a block's affine expression at x (svec coordinates for Psd).
  VectorXd block_value(int block, const VectorXd& x) const;
  /// Evaluates a Psd block as a symmetric matrix.
  MatrixXd psd_block_value(int block, const VectorXd& x) const;

  /// Self-contained text dump (dimension header plus triplet lists) so a
  /// problem can be re-checked against an independent solver.
  void dump(std::ostream& os) const;

 private:
  Block& open_block();

  int nvar_ = 0;
  std::vector<double> c_;
  std::vector<Block> blocks_;
  bool block_open_ = false;
};

/// Interior-point solve. Deterministic for identical inputs and settings.
/// Status is part of the result; only structurally malformed problems throw.
ConicSolution solve(const ConicProblem& p, const ToleranceConfig& tol = {});

}  // namespace admpc
