#pragma once

#include <Eigen/Dense>
#include <vector>

#include "admpc/error.hpp"

namespace admpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Discrete-time plant x+ = A x + B u with polytopic constraints
/// G x <= g, H u <= h and quadratic stage cost x'Qx + u'Ru.
struct LtiSystem {
  MatrixXd A;
  MatrixXd B;
  MatrixXd G;
  VectorXd g;
  MatrixXd H;
  VectorXd h;
  MatrixXd Q;
  MatrixXd R;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
};

/// Continuous-time plant xdot = A_c x + B_c u carrying the same constraint
/// and cost data as its discretizations.
struct CtsLtiSystem {
  MatrixXd A_c;
  MatrixXd B_c;
  MatrixXd G;
  VectorXd g;
  MatrixXd H;
  VectorXd h;
  MatrixXd Q;
  MatrixXd R;

  int n() const { return static_cast<int>(A_c.rows()); }
  int m() const { return static_cast<int>(B_c.cols()); }
};

/// Proof token that an LtiSystem passed validate_system. Only that function
/// can mint one, so downstream code can rely on the invariants.
class ValidatedSystem {
 public:
  const LtiSystem& get() const { return sys_; }
  const LtiSystem* operator->() const { return &sys_; }

 private:
  friend ValidatedSystem validate_system(const LtiSystem& sys);
  explicit ValidatedSystem(LtiSystem sys) : sys_(std::move(sys)) {}
  LtiSystem sys_;
};

/// Index-based description of how states and inputs split into M subsystems.
/// All indices are 0-based. states[i]/inputs[i] must partition the global
/// index ranges; neighbors[i] lists subsystem ids and must contain i.
struct Partition {
  std::vector<std::vector<int>> states;
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> neighbors;

  int size() const { return static_cast<int>(states.size()); }
};

/// Local view of subsystem i over its neighborhood: dynamics row block
/// A_Ni = U_i A W_Ni', input map B_i = U_i B V_i', the constraint rows owned
/// by i, and the local cost blocks.
struct SubsystemView {
  int index = 0;
  std::vector<int> neighbor_ids;  // sorted ascending, contains index
  std::vector<int> own_states;    // global state indices (U_i row order)
  std::vector<int> own_inputs;    // global input indices (V_i row order)
  std::vector<int> nbhd_states;   // global state indices (W_Ni row order)
  // Offset/length of neighbor j's states inside nbhd_states, aligned with
  // neighbor_ids.
  std::vector<int> block_offset;
  std::vector<int> block_size;

  MatrixXd A_Ni;
  MatrixXd B_i;
  MatrixXd G_Ni;
  VectorXd g_Ni;
  MatrixXd H_i;
  VectorXd h_i;
  MatrixXd Q_Ni;
  MatrixXd R_i;

  int n_i = 0;
  int n_Ni = 0;
  int m_i = 0;

  /// Position of neighbor j (a subsystem id) in neighbor_ids, or -1.
  int neighbor_pos(int j) const;
  /// Extracts x_Ni from a global state vector.
  VectorXd restrict_state(const VectorXd& x) const;
  /// Extracts u_i from a global input vector.
  VectorXd restrict_input(const VectorXd& u) const;
};

/// A validated system together with its decomposition into subsystem views
/// and the 0/1 selection matrices U_i (own states), W_Ni (neighborhood
/// states) and V_i (own inputs).
struct CoupledSystem {
  LtiSystem sys;
  Partition part;
  std::vector<SubsystemView> views;
  std::vector<MatrixXd> U;
  std::vector<MatrixXd> W;
  std::vector<MatrixXd> V;

  int M() const { return static_cast<int>(views.size()); }
  int n() const { return sys.n(); }
  int m() const { return sys.m(); }
};

/// Checks all LtiSystem invariants: consistent dimensions, finite entries,
/// controllable (A, B), strictly interior origin (g > 0, h > 0), Q symmetric
/// PSD and R symmetric PD.
ValidatedSystem validate_system(const LtiSystem& sys);

/// Splits a validated system along a partition. Fails with
/// CouplingClosureViolated when dynamics or constraints reach outside a
/// declared neighborhood, and with CostNotDecomposable when Q or R cannot be
/// split into PSD local blocks (cross terms between non-neighbors, indefinite
/// induced blocks, or R coupling inputs of different subsystems).
CoupledSystem decompose(const ValidatedSystem& sys, const Partition& part);

/// Exact zero-order-hold discretization with sample time dt.
LtiSystem zoh_discretize(const CtsLtiSystem& cts, double dt);

/// Forward-Euler discretization A = I + dt*A_c, B = dt*B_c. Preserves the
/// sparsity pattern of the continuous dynamics.
LtiSystem euler_discretize(const CtsLtiSystem& cts, double dt);

/// Local stage cost x_Ni' Q_Ni x_Ni + u_i' R_i u_i.
double stage_cost(const SubsystemView& view, const VectorXd& x_Ni, const VectorXd& u_i);

/// Global stage cost x'Qx + u'Ru.
double global_stage_cost(const LtiSystem& sys, const VectorXd& x, const VectorXd& u);

}  // namespace admpc
