#include "admpc/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace admpc {

namespace {

void require(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) throw Error(kind, msg);
}

bool is_symmetric(const MatrixXd& M, double tol) {
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, M.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotControllable: return "NotControllable";
    case ErrorKind::OriginNotInterior: return "OriginNotInterior";
    case ErrorKind::CostNotPD: return "CostNotPD";
    case ErrorKind::CouplingClosureViolated: return "CouplingClosureViolated";
    case ErrorKind::CostNotDecomposable: return "CostNotDecomposable";
    case ErrorKind::BuildError: return "BuildError";
    case ErrorKind::NotStable: return "NotStable";
    case ErrorKind::IterationCapExceeded: return "IterationCapExceeded";
    case ErrorKind::SynthesisInfeasible: return "SynthesisInfeasible";
    case ErrorKind::StructuredSynthesisInfeasible: return "StructuredSynthesisInfeasible";
    case ErrorKind::IllConditionedDesign: return "IllConditionedDesign";
    case ErrorKind::StepInfeasible: return "StepInfeasible";
    case ErrorKind::MaxRoundsExceeded: return "MaxRoundsExceeded";
  }
  return "UnknownError";
}

int SubsystemView::neighbor_pos(int j) const {
  auto it = std::lower_bound(neighbor_ids.begin(), neighbor_ids.end(), j);
  if (it == neighbor_ids.end() || *it != j) return -1;
  return static_cast<int>(it - neighbor_ids.begin());
}

VectorXd SubsystemView::restrict_state(const VectorXd& x) const {
  VectorXd out(n_Ni);
  for (int k = 0; k < n_Ni; ++k) out[k] = x[nbhd_states[k]];
  return out;
}

VectorXd SubsystemView::restrict_input(const VectorXd& u) const {
  VectorXd out(m_i);
  for (int k = 0; k < m_i; ++k) out[k] = u[own_inputs[k]];
  return out;
}

ValidatedSystem validate_system(const LtiSystem& sys) {
  const int n = sys.n();
  const int m = sys.m();
  require(n >= 1 && sys.A.cols() == n, ErrorKind::DimensionMismatch, "A must be square and nonempty");
  require(sys.B.rows() == n && m >= 1, ErrorKind::DimensionMismatch, "B must be n x m with m >= 1");
  require(sys.G.rows() == sys.g.size(), ErrorKind::DimensionMismatch, "G and g row counts differ");
  require(sys.G.rows() == 0 || sys.G.cols() == n, ErrorKind::DimensionMismatch, "G must have n columns");
  require(sys.H.rows() == sys.h.size(), ErrorKind::DimensionMismatch, "H and h row counts differ");
  require(sys.H.rows() == 0 || sys.H.cols() == m, ErrorKind::DimensionMismatch, "H must have m columns");
  require(sys.Q.rows() == n && sys.Q.cols() == n, ErrorKind::DimensionMismatch, "Q must be n x n");
  require(sys.R.rows() == m && sys.R.cols() == m, ErrorKind::DimensionMismatch, "R must be m x m");

  bool finite = sys.A.allFinite() && sys.B.allFinite() && sys.G.allFinite() && sys.g.allFinite() &&
                sys.H.allFinite() && sys.h.allFinite() && sys.Q.allFinite() && sys.R.allFinite();
  require(finite, ErrorKind::DimensionMismatch, "system data must be finite");

  MatrixXd ctrb(n, n * m);
  MatrixXd Ak = MatrixXd::Identity(n, n);
  for (int k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = Ak * sys.B;
    Ak = sys.A * Ak;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(ctrb);
  qr.setThreshold(1e-10);
  require(qr.rank() == n, ErrorKind::NotControllable, "(A, B) fails the controllability rank test");

  require(sys.g.size() == 0 || sys.g.minCoeff() > 0.0, ErrorKind::OriginNotInterior,
          "state constraint bounds must be strictly positive");
  require(sys.h.size() == 0 || sys.h.minCoeff() > 0.0, ErrorKind::OriginNotInterior,
          "input constraint bounds must be strictly positive");

  require(is_symmetric(sys.Q, 1e-12), ErrorKind::CostNotPD, "Q must be symmetric");
  require(min_eigenvalue(sys.Q) >= -1e-10 * std::max(1.0, sys.Q.norm()), ErrorKind::CostNotPD,
          "Q must be positive semidefinite");
  require(is_symmetric(sys.R, 1e-12), ErrorKind::CostNotPD, "R must be symmetric");
  require(min_eigenvalue(sys.R) > 1e-12 * std::max(1.0, sys.R.norm()), ErrorKind::CostNotPD,
          "R must be positive definite");

  return ValidatedSystem(sys);
}

namespace {

// Maps each global state/input index to its owning subsystem; validates that
// the lists form a partition of [0, count).
std::vector<int> owner_map(const std::vector<std::vector<int>>& lists, int count, const char* what) {
  std::vector<int> owner(count, -1);
  for (int i = 0; i < static_cast<int>(lists.size()); ++i) {
    for (int idx : lists[i]) {
      require(idx >= 0 && idx < count, ErrorKind::BuildError,
              std::string(what) + " index out of range");
      require(owner[idx] == -1, ErrorKind::BuildError,
              std::string(what) + " index assigned to two subsystems");
      owner[idx] = i;
    }
  }
  for (int idx = 0; idx < count; ++idx)
    require(owner[idx] != -1, ErrorKind::BuildError, std::string(what) + " indices do not cover the range");
  return owner;
}

MatrixXd selection_matrix(const std::vector<int>& rows, int cols) {
  MatrixXd S = MatrixXd::Zero(static_cast<int>(rows.size()), cols);
  for (int k = 0; k < static_cast<int>(rows.size()); ++k) S(k, rows[k]) = 1.0;
  return S;
}

}  // namespace

CoupledSystem decompose(const ValidatedSystem& vsys, const Partition& part) {
  const LtiSystem& sys = vsys.get();
  const int n = sys.n();
  const int m = sys.m();
  const int M = part.size();
  require(M >= 1, ErrorKind::BuildError, "partition must contain at least one subsystem");
  require(static_cast<int>(part.inputs.size()) == M && static_cast<int>(part.neighbors.size()) == M,
          ErrorKind::BuildError, "partition lists must all have length M");

  std::vector<int> state_owner = owner_map(part.states, n, "state");
  std::vector<int> input_owner = owner_map(part.inputs, m, "input");

  CoupledSystem cs;
  cs.sys = sys;
  cs.part = part;
  cs.views.resize(M);
  cs.U.resize(M);
  cs.W.resize(M);
  cs.V.resize(M);

  for (int i = 0; i < M; ++i) {
    SubsystemView& v = cs.views[i];
    v.index = i;
    v.own_states = part.states[i];
    v.own_inputs = part.inputs[i];
    v.neighbor_ids = part.neighbors[i];
    std::sort(v.neighbor_ids.begin(), v.neighbor_ids.end());
    v.neighbor_ids.erase(std::unique(v.neighbor_ids.begin(), v.neighbor_ids.end()), v.neighbor_ids.end());
    for (int j : v.neighbor_ids)
      require(j >= 0 && j < M, ErrorKind::BuildError, "neighbor id out of range");
    require(v.neighbor_pos(i) >= 0, ErrorKind::BuildError, "subsystem must be its own neighbor");

    for (int j : v.neighbor_ids) {
      v.block_offset.push_back(static_cast<int>(v.nbhd_states.size()));
      v.block_size.push_back(static_cast<int>(part.states[j].size()));
      v.nbhd_states.insert(v.nbhd_states.end(), part.states[j].begin(), part.states[j].end());
    }
    v.n_i = static_cast<int>(v.own_states.size());
    v.m_i = static_cast<int>(v.own_inputs.size());
    v.n_Ni = static_cast<int>(v.nbhd_states.size());
    require(v.n_i >= 1, ErrorKind::BuildError, "every subsystem needs at least one state");

    cs.U[i] = selection_matrix(v.own_states, n);
    cs.W[i] = selection_matrix(v.nbhd_states, n);
    cs.V[i] = selection_matrix(v.own_inputs, m);

    v.A_Ni = cs.U[i] * sys.A * cs.W[i].transpose();
    v.B_i = cs.U[i] * sys.B * cs.V[i].transpose();

    // Dynamics closure: rows of U_i A may only touch neighborhood states.
    std::set<int> nbhd(v.nbhd_states.begin(), v.nbhd_states.end());
    for (int a : v.own_states)
      for (int b = 0; b < n; ++b)
        if (sys.A(a, b) != 0.0 && nbhd.count(b) == 0)
          throw Error(ErrorKind::CouplingClosureViolated,
                      "state " + std::to_string(b) + " drives subsystem " + std::to_string(i) +
                          " but its owner is not a declared neighbor");

    // Inputs act only on their own subsystem's states.
    for (int a : v.own_states)
      for (int b = 0; b < m; ++b)
        if (sys.B(a, b) != 0.0 && input_owner[b] != i)
          throw Error(ErrorKind::CouplingClosureViolated,
                      "input " + std::to_string(b) + " drives a foreign subsystem; input coupling is not supported");
  }

  // Constraint rows: a state row belongs to the lowest-index subsystem it
  // touches; every pair of touched subsystems must be mutual neighbors so the
  // owner's neighborhood covers the whole row.
  std::vector<std::vector<int>> g_rows(M);
  for (int l = 0; l < sys.G.rows(); ++l) {
    std::set<int> touched;
    for (int b = 0; b < n; ++b)
      if (sys.G(l, b) != 0.0) touched.insert(state_owner[b]);
    if (touched.empty()) continue;  // vacuous row, satisfied everywhere
    for (int a : touched)
      for (int b : touched)
        if (cs.views[a].neighbor_pos(b) < 0)
          throw Error(ErrorKind::CouplingClosureViolated,
                      "state constraint row " + std::to_string(l) + " couples non-neighboring subsystems");
    g_rows[*touched.begin()].push_back(l);
  }
  for (int l = 0; l < sys.H.rows(); ++l) {
    std::set<int> touched;
    for (int b = 0; b < m; ++b)
      if (sys.H(l, b) != 0.0) touched.insert(input_owner[b]);
    if (touched.empty()) continue;
    if (touched.size() > 1)
      throw Error(ErrorKind::CouplingClosureViolated,
                  "input constraint row " + std::to_string(l) + " couples inputs of different subsystems");
  }

  for (int i = 0; i < M; ++i) {
    SubsystemView& v = cs.views[i];
    v.G_Ni = MatrixXd::Zero(static_cast<int>(g_rows[i].size()), v.n_Ni);
    v.g_Ni = VectorXd::Zero(static_cast<int>(g_rows[i].size()));
    for (int r = 0; r < static_cast<int>(g_rows[i].size()); ++r) {
      int l = g_rows[i][r];
      for (int k = 0; k < v.n_Ni; ++k) v.G_Ni(r, k) = sys.G(l, v.nbhd_states[k]);
      v.g_Ni[r] = sys.g[l];
    }
    std::vector<int> h_rows;
    for (int l = 0; l < sys.H.rows(); ++l) {
      bool mine = false, foreign = false;
      for (int b = 0; b < m; ++b)
        if (sys.H(l, b) != 0.0) (input_owner[b] == i ? mine : foreign) = true;
      if (mine && !foreign) h_rows.push_back(l);
    }
    v.H_i = MatrixXd::Zero(static_cast<int>(h_rows.size()), v.m_i);
    v.h_i = VectorXd::Zero(static_cast<int>(h_rows.size()));
    for (int r = 0; r < static_cast<int>(h_rows.size()); ++r) {
      for (int k = 0; k < v.m_i; ++k) v.H_i(r, k) = sys.H(h_rows[r], v.own_inputs[k]);
      v.h_i[r] = sys.h[h_rows[r]];
    }
  }

  // Stage-cost split: diagonal blocks stay with their owner, cross blocks are
  // shared half/half between the two owners. The induced local blocks must be
  // PSD for the local costs to be valid.
  std::vector<std::vector<int>> local_pos(M, std::vector<int>(n, -1));
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < cs.views[i].n_Ni; ++k) local_pos[i][cs.views[i].nbhd_states[k]] = k;

  for (int i = 0; i < M; ++i)
    cs.views[i].Q_Ni = MatrixXd::Zero(cs.views[i].n_Ni, cs.views[i].n_Ni);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double q = sys.Q(a, b);
      if (q == 0.0) continue;
      int ia = state_owner[a], ib = state_owner[b];
      if (ia == ib) {
        cs.views[ia].Q_Ni(local_pos[ia][a], local_pos[ia][b]) += q;
      } else {
        require(cs.views[ia].neighbor_pos(ib) >= 0 && cs.views[ib].neighbor_pos(ia) >= 0,
                ErrorKind::CostNotDecomposable, "Q couples states of non-neighboring subsystems");
        cs.views[ia].Q_Ni(local_pos[ia][a], local_pos[ia][b]) += 0.5 * q;
        cs.views[ib].Q_Ni(local_pos[ib][a], local_pos[ib][b]) += 0.5 * q;
      }
    }
  }
  for (int i = 0; i < M; ++i) {
    require(min_eigenvalue(cs.views[i].Q_Ni) >= -1e-10 * std::max(1.0, sys.Q.norm()),
            ErrorKind::CostNotDecomposable, "induced local state-cost block is indefinite");
    cs.views[i].R_i = MatrixXd::Zero(cs.views[i].m_i, cs.views[i].m_i);
    for (int r = 0; r < cs.views[i].m_i; ++r)
      for (int c = 0; c < cs.views[i].m_i; ++c)
        cs.views[i].R_i(r, c) = sys.R(cs.views[i].own_inputs[r], cs.views[i].own_inputs[c]);
  }
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (sys.R(a, b) != 0.0 && input_owner[a] != input_owner[b])
        throw Error(ErrorKind::CostNotDecomposable, "R couples inputs of different subsystems");

  return cs;
}

LtiSystem zoh_discretize(const CtsLtiSystem& cts, double dt) {
  require(dt > 0.0, ErrorKind::BuildError, "sample time must be positive");
  const int n = cts.n();
  const int m = cts.m();
  MatrixXd aug = MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = cts.A_c * dt;
  aug.topRightCorner(n, m) = cts.B_c * dt;
  MatrixXd E = aug.exp();
  LtiSystem d;
  d.A = E.topLeftCorner(n, n);
  d.B = E.topRightCorner(n, m);
  d.G = cts.G;
  d.g = cts.g;
  d.H = cts.H;
  d.h = cts.h;
  d.Q = cts.Q;
  d.R = cts.R;
  return d;
}

LtiSystem euler_discretize(const CtsLtiSystem& cts, double dt) {
  require(dt > 0.0, ErrorKind::BuildError, "sample time must be positive");
  LtiSystem d;
  d.A = MatrixXd::Identity(cts.n(), cts.n()) + dt * cts.A_c;
  d.B = dt * cts.B_c;
  d.G = cts.G;
  d.g = cts.g;
  d.H = cts.H;
  d.h = cts.h;
  d.Q = cts.Q;
  d.R = cts.R;
  return d;
}

double stage_cost(const SubsystemView& view, const VectorXd& x_Ni, const VectorXd& u_i) {
  require(x_Ni.size() == view.n_Ni, ErrorKind::DimensionMismatch, "x_Ni has wrong length");
  require(u_i.size() == view.m_i, ErrorKind::DimensionMismatch, "u_i has wrong length");
  return x_Ni.dot(view.Q_Ni * x_Ni) + u_i.dot(view.R_i * u_i);
}

double global_stage_cost(const LtiSystem& sys, const VectorXd& x, const VectorXd& u) {
  require(x.size() == sys.n() && u.size() == sys.m(), ErrorKind::DimensionMismatch,
          "state or input has wrong length");
  return x.dot(sys.Q * x) + u.dot(sys.R * u);
}

}  // namespace admpc
