#pragma once

#include <Eigen/Dense>
#include <vector>

#include "admpc/conic.hpp"
#include "admpc/lmi.hpp"
#include "admpc/model.hpp"
#include "admpc/terminal_sets.hpp"

namespace admpc {

/// Terminal-set strategy of one finite-horizon problem.
///   CMax      centralized, maximal invariant polytope A_f x_T <= b_f
///   CEllip    centralized, fixed ellipsoid x_T' P x_T <= alpha*
///   DFixed    decoupled, fixed per-subsystem levels x_iT' Z_i x_iT <= beta_i^2
///   DAdaptive decoupled, levels and gains co-optimized online (full LMI block)
///   DAd0      decoupled, levels adapted once at t=0 and then frozen
enum class MpcVariant { CMax, CEllip, DFixed, DAdaptive, DAd0 };

const char* to_string(MpcVariant v);

/// One finite-horizon problem: prediction model, horizon, and the terminal
/// objects its variant needs. Build through the make_* helpers so the
/// variant's required objects are guaranteed present. Copies are cheap and
/// the formulation owns everything it references.
struct MpcFormulation {
  MpcVariant variant = MpcVariant::CMax;
  int T = 1;
  CoupledSystem cs;  // prediction model; views drive the decoupled variants

  CentralizedTerminal central;    // CMax/CEllip terminal cost x'P_c x
  PolyhedralSet terminal_poly;    // CMax
  double alpha_star = 0.0;        // CEllip level on central.P_c

  DistributedTerminalDesign design;  // D* terminal cost and shapes
  AdaptiveLevels fixed;              // DFixed/DAd0 levels and gains

  ToleranceConfig tol;  // per-variant solver tolerance (set by make_*)
};

MpcFormulation make_cmax(const CoupledSystem& cs, const CentralizedTerminal& ct,
                         const PolyhedralSet& terminal, int T);
MpcFormulation make_cellip(const CoupledSystem& cs, const CentralizedTerminal& ct,
                           double alpha_star, int T);
MpcFormulation make_dfixed(const CoupledSystem& cs, const DistributedTerminalDesign& design,
                           const AdaptiveLevels& levels, int T);
MpcFormulation make_dadaptive(const CoupledSystem& cs, const DistributedTerminalDesign& design,
                              int T);

/// Variable layout of a built problem. States stack time-major before
/// inputs; w is the objective epigraph; adaptive holds the online LMI
/// variables (DAdaptive only, empty otherwise).
struct MpcVars {
  int x0 = 0;
  int u0 = 0;
  int w = 0;
  int n = 0, m = 0, T = 0;
  AdaptiveVarLayout adaptive;

  int xvar(int t, int k) const { return x0 + t * n + k; }
  int uvar(int t, int k) const { return u0 + t * m + k; }
};

/// Lowers the formulation at initial state x0 to a cone program: epigraph
/// second-order cone for the quadratic objective, equality blocks for the
/// dynamics, nonnegativity rows for the path constraints (states t=1..T-1,
/// inputs t=0..T-1; x0 is checked by the caller), and the variant's terminal
/// blocks. Throws BuildError when the formulation lacks its terminal objects
/// or dimensions disagree.
ConicProblem build(const MpcFormulation& form, const VectorXd& x0, MpcVars* vars = nullptr);

/// Solved finite-horizon problem. `feasible` marks a usable minimizer:
/// either a clean Optimal or a best iterate whose residuals pass the
/// acceptance thresholds; Infeasible and unusable iterates leave it false
/// and the trajectories empty.
struct MpcSolution {
  SolveStatus status = SolveStatus::NumericalTrouble;
  bool feasible = false;
  MatrixXd x;          // n x (T+1)
  MatrixXd u;          // m x T
  VectorXd alpha;      // beta_i^2 per subsystem (D variants), else empty
  AdaptiveLevels levels;  // beta/Y/K in effect (D variants), else empty
  double objective = 0.0;
  double solve_ms = 0.0;
  ConicSolution raw;   // residuals and iteration count for diagnostics
};

MpcSolution solve_mpc(const MpcFormulation& form, const VectorXd& x0);

/// Freezes a solved adaptive instance into a DAd0 formulation: levels,
/// shapes and gains from the t=0 solution, terminal membership as plain
/// second-order cones (no PSD blocks remain). Throws BuildError unless form
/// is DAdaptive and sol is feasible.
MpcFormulation fix_alpha(const MpcFormulation& form, const MpcSolution& sol);

/// Objective recomputed from trajectories: sum of stage costs plus the
/// variant's terminal value. Used to cross-check the solver objective.
double recompute_objective(const MpcFormulation& form, const MatrixXd& x, const MatrixXd& u);

/// Worst violation when the optimal sequence is shifted one step and closed
/// with the terminal gain: path constraints of the successor problem, input
/// admissibility of the appended terminal input, and terminal membership of
/// the appended state at the same levels. Negative means the tail is
/// feasible with margin; recursive feasibility predicts <= 0 up to solver
/// accuracy.
double tail_violation(const MpcFormulation& form, const MpcSolution& sol);

struct RhOptions {
  double conv_tol = 1e-3;  // on the inf-norm of the plant state
  int max_steps = 300;
};

/// One executed closed-loop step: the realized plant state, the applied
/// first input, and the solve that produced it.
struct RhStep {
  int t = 0;
  VectorXd x;
  VectorXd u;
  double stage_cost = 0.0;
  double j_star = 0.0;
  VectorXd alpha;  // levels in effect (D variants), else empty
  SolveStatus status = SolveStatus::Optimal;
  double solve_ms = 0.0;
  double tail = 0.0;  // tail-sequence violation of this step's solution
};

/// Closed-loop record. `steps` holds the executed prefix; a run ends
/// converged, out of steps, or at the first unusable solve (infeasible_at =
/// that t, last_status its solver status, steps untouched).
struct RhTrace {
  std::vector<RhStep> steps;
  bool converged = false;
  int infeasible_at = -1;
  SolveStatus last_status = SolveStatus::Optimal;
  VectorXd final_state;
};

/// Receding-horizon loop: solve the formulation at the current plant state,
/// apply the first input to sim_model, log, repeat until the plant state
/// drops below conv_tol or max_steps runs out. The prediction model inside
/// `form` and the plant may differ (deliberate model-mismatch experiments);
/// dimensions must agree.
RhTrace receding_horizon(const LtiSystem& sim_model, const MpcFormulation& form,
                         const VectorXd& x0, const RhOptions& opts = {});

/// Sum of logged stage costs (cost of operating the plant until the run
/// ended). Zero for a run that converged before its first solve.
double closed_loop_cost(const RhTrace& trace);

}  // namespace admpc
