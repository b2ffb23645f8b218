#pragma once

#include <Eigen/Dense>
#include <vector>

#include "admpc/conic.hpp"
#include "admpc/model.hpp"

namespace admpc {

/// Centralized terminal ingredients: value function x'P_c x and gain u = K_c x
/// satisfying the closed-loop Lyapunov decrease against the stage cost.
struct CentralizedTerminal {
  MatrixXd P_c;
  MatrixXd K_c;
};

/// Offline products of the structured synthesis: per-subsystem value matrices
/// P_i, terminal-shape matrices Z_i, reference gains K_Ni^ref over the
/// neighborhood, plus constants reused by every online LMI (inverses and
/// symmetric square roots are factored once here).
struct DistributedTerminalDesign {
  std::vector<MatrixXd> P;
  std::vector<MatrixXd> Z;
  std::vector<MatrixXd> K_ref;  // m_i x n_Ni

  std::vector<MatrixXd> P_inv;
  std::vector<MatrixXd> Z_inv;
  std::vector<MatrixXd> Q_sqrt;  // symmetric sqrt of Q_Ni
  std::vector<MatrixXd> R_sqrt;  // symmetric sqrt of R_i
};

struct DesignOptions {
  bool identity_shape = false;  // Z_i = I instead of Z_i = P_i
  double cond_limit = 1e10;     // per-block condition bound on E_i

  /// The recovered value matrices are scaled to P_i = (1 + decrease_margin)
  /// times the synthesis optimum. The optimum certifies a Lyapunov decrease
  /// that is tight at -l(x, Kx), which leaves the online relaxation blocks no
  /// slack to trade between subsystems and pins every level at the symmetric
  /// point. A margin of m keeps spare decrease m * l(x, Kx) for that trade;
  /// any m >= 0 preserves the decrease certificate.
  double decrease_margin = 1.0;

  /// Synthesis runs against the stage cost (Q / s, R) and the recovered value
  /// matrices are multiplied by s afterwards, which leaves the certificate
  /// against the true cost intact (the slack s*K'RK - K'RK >= 0 absorbs the
  /// difference). Values above 1 soften the reference gains; the value
  /// ellipsoids then lean less into the velocity directions and can certify
  /// levels that fill the state box, which weakly actuated plants need for
  /// short-horizon feasibility. Must be >= 1; 1 leaves the synthesis as is.
  double low_gain_scale = 1.0;
};

/// Variable indices of the Lyapunov synthesis problem. E and S are symmetric
/// (mirrored index blocks); an entry of -1 marks a structurally-zero slot.
struct Theorem1Vars {
  Eigen::MatrixXi E;
  Eigen::MatrixXi Y;
  Eigen::MatrixXi S;
};

/// min trace(S) over (E = P^{-1}, Y = K E, S) subject to
/// [[E, (AE+BY)', E Q^{1/2}, Y' R^{1/2}], [AE+BY, E, 0, 0],
///  [Q^{1/2} E, 0, I, 0], [R^{1/2} Y, 0, 0, I]] psd and [[S, I], [I, E]] psd.
/// The trace epigraph keeps E positive definite and makes the optimum the
/// Riccati fixed point.
ConicProblem build_theorem1_synthesis(const ValidatedSystem& sys, Theorem1Vars& vars);

/// Solves the synthesis and recovers P_c = E^{-1}, K_c = Y E^{-1}.
CentralizedTerminal solve_theorem1(const ValidatedSystem& sys, const ToleranceConfig& tol = {});

/// Same synthesis restricted to block-diagonal E and neighborhood-sparse Y;
/// recovers P_i = (1 + decrease_margin) E_i^{-1}, K^ref = Y E^{-1} and sets
/// Z_i per options.
DistributedTerminalDesign build_design_phase(const CoupledSystem& cs, const DesignOptions& opts = {},
                                             const ToleranceConfig& tol = {});

/// Variable indices of the online-adaptive block for one assembled problem:
/// scalars beta_i (the square roots of the levels alpha_i), scaled gains
/// Y_Ni, symmetric relaxation blocks H_Ni, and the S-procedure multipliers.
/// Matrix blocks hold one index per entry; H mirrors across the diagonal.
struct AdaptiveVarLayout {
  std::vector<int> beta;
  std::vector<Eigen::MatrixXi> Y;         // m_i x n_Ni
  std::vector<Eigen::MatrixXi> H;         // n_Ni x n_Ni symmetric
  std::vector<std::vector<int>> lambda;   // per neighbor j
  std::vector<Eigen::MatrixXi> tau;       // state row x neighbor
  std::vector<Eigen::MatrixXi> rho;       // input row x neighbor
};

/// Adds all adaptive variables for every subsystem and the nonnegativity
/// block over (beta, lambda, tau, rho). The six condition builders below only
/// add their own PSD blocks and multiplier sum rows.
AdaptiveVarLayout allocate_adaptive_vars(const CoupledSystem& cs, ConicProblem& p);

/// Tolerances for solves that include the adaptive blocks. Their optima are
/// degenerate (input rows active, rank-deficient KKT), so joint 1e-8
/// accuracy sits below the double-precision floor; 1e-7/1e-6 converges
/// cleanly and still leaves sampled violations under 1e-7.
ToleranceConfig adaptive_tolerance();

/// Invariance of the scaled ellipsoid under the recovered gain:
/// [[Z_i^{-1} beta_i, A_Ni B(beta) + B_i Y_Ni], [(.)', sum_j lambda_ij Z_ij]]
/// psd, plus sum_j lambda_ij <= beta_i. B(beta) = blockdiag_j(beta_j I).
void build_c1(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, ConicProblem& p);

/// One state-constraint row: [[g^l, G^l B(beta)], [(.)', sum_j tau^l_ij Z_ij]]
/// psd plus sum_j tau^l_ij <= g^l.
void build_c2(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, int row, ConicProblem& p);

/// One input-constraint row: [[h^l, H^l Y_Ni], [(.)', sum_j rho^l_ij Z_ij]]
/// psd plus sum_j rho^l_ij <= h^l.
void build_c3(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, int row, ConicProblem& p);

/// Relaxed local Lyapunov decrease:
/// [[P_i^{-1} beta_i, A_Ni B(beta) + B_i Y_Ni, 0, 0],
///  [(.)', P_ii beta_i + H_Ni, B(beta) Q_Ni^{1/2}, Y_Ni' R_i^{1/2}],
///  [0, Q_Ni^{1/2} B(beta), beta_i I, 0],
///  [0, R_i^{1/2} Y_Ni, 0, beta_i I]] psd.
void build_c4(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, ConicProblem& p);

/// Global coupling of the relaxations: -sum_i W_Ni' H_Ni W_Ni psd.
void build_c5(const CoupledSystem& cs, const AdaptiveVarLayout& vars, ConicProblem& p);

/// Terminal membership x_iT' Z_i x_iT <= beta_i^2 as
/// [[beta_i Z_i^{-1}, x_iT], [x_iT', beta_i]] psd (Schur complement);
/// forces x_iT = 0 when beta_i = 0.
void build_c6(const std::vector<int>& x_terminal, const SubsystemView& view,
              const DistributedTerminalDesign& design, const AdaptiveVarLayout& vars,
              ConicProblem& p);

/// Gain recovery K_Ni = Y_Ni B(beta)^{-1}, column block by column block.
/// Blocks whose beta_j <= gain_tol fall back to the reference gain columns
/// (their neighbors sit at the origin, so the gain there is immaterial).
MatrixXd recover_gain(const SubsystemView& view, const DistributedTerminalDesign& design,
                      const MatrixXd& Y_i, const VectorXd& beta_all, double gain_tol = 1e-9);

}  // namespace admpc
