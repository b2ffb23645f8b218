#include "admpc/lmi.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace admpc {

namespace {

// Allocates a symmetric d x d variable block; (r,c) and (c,r) share an index.
Eigen::MatrixXi alloc_sym(ConicProblem& p, int d) {
  Eigen::MatrixXi idx(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r) idx(r, c) = idx(c, r) = p.add_vars(1);
  return idx;
}

Eigen::MatrixXi alloc_mat(ConicProblem& p, int rows, int cols) {
  Eigen::MatrixXi idx(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) idx(r, c) = p.add_vars(1);
  return idx;
}

MatrixXd sym_sqrt(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd sym_inv(const MatrixXd& M, double cond_limit, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > cond_limit)
    throw Error(ErrorKind::IllConditionedDesign,
                std::string(what) + " is singular or too ill-conditioned to invert");
  MatrixXd inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                 es.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

// Emits min trace(S) s.t. the Lyapunov-synthesis LMI and the trace epigraph
// [[S, I], [I, E]] >= 0 over the given (possibly sparsified) index patterns.
// An index of -1 marks a structurally-zero entry.
void emit_synthesis(ConicProblem& p, const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qs,
                    const MatrixXd& Rs, const Eigen::MatrixXi& E, const Eigen::MatrixXi& Y,
                    const Eigen::MatrixXi& S) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());

  for (int i = 0; i < n; ++i)
    if (S(i, i) >= 0) p.add_objective(S(i, i), 1.0);

  p.begin_psd_block(3 * n + m);
  for (int c = 0; c < n; ++c) {
    for (int r = c; r < n; ++r)
      if (E(r, c) >= 0) p.add_psd_coeff(r, c, E(r, c), 1.0);
    // (A E + B Y) and the two weighted rows below it
    for (int r = 0; r < n; ++r) {
      for (int k = 0; k < n; ++k)
        if (E(k, c) >= 0 && A(r, k) != 0.0) p.add_psd_coeff(n + r, c, E(k, c), A(r, k));
      for (int k = 0; k < m; ++k)
        if (Y(k, c) >= 0 && B(r, k) != 0.0) p.add_psd_coeff(n + r, c, Y(k, c), B(r, k));
      for (int k = 0; k < n; ++k)
        if (E(k, c) >= 0 && Qs(r, k) != 0.0) p.add_psd_coeff(2 * n + r, c, E(k, c), Qs(r, k));
    }
    for (int r = 0; r < m; ++r)
      for (int k = 0; k < m; ++k)
        if (Y(k, c) >= 0 && Rs(r, k) != 0.0) p.add_psd_coeff(3 * n + r, c, Y(k, c), Rs(r, k));
  }
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r)
      if (E(r, c) >= 0) p.add_psd_coeff(n + r, n + c, E(r, c), 1.0);
  for (int r = 0; r < n; ++r) p.add_psd_constant(2 * n + r, 2 * n + r, 1.0);
  for (int r = 0; r < m; ++r) p.add_psd_constant(3 * n + r, 3 * n + r, 1.0);
  p.end_block();

  p.begin_psd_block(2 * n);
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r) {
      if (S(r, c) >= 0) p.add_psd_coeff(r, c, S(r, c), 1.0);
      if (E(r, c) >= 0) p.add_psd_coeff(n + r, n + c, E(r, c), 1.0);
    }
  for (int r = 0; r < n; ++r) p.add_psd_constant(n + r, r, 1.0);
  p.end_block();
}

// The synthesis LMIs are tight at the optimum, so the recovered P inherits
// the solver's feasibility error. One extra digit keeps the closed-loop
// decrease residual comfortably inside the documented 1e-8 slack; if the
// tighter run stalls, the requested tolerance still stands.
ConicSolution solve_tight(const ConicProblem& p, const ToleranceConfig& tol) {
  ToleranceConfig tight = tol;
  tight.feas_tol = std::min(tol.feas_tol, 1e-9);
  tight.gap_tol = std::min(tol.gap_tol, 1e-9);
  ConicSolution sol = solve(p, tight);
  if (!sol.optimal() && (tight.feas_tol != tol.feas_tol || tight.gap_tol != tol.gap_tol))
    sol = solve(p, tol);
  return sol;
}

MatrixXd read_values(const Eigen::MatrixXi& idx, const VectorXd& x) {
  MatrixXd out = MatrixXd::Zero(idx.rows(), idx.cols());
  for (int c = 0; c < idx.cols(); ++c)
    for (int r = 0; r < idx.rows(); ++r)
      if (idx(r, c) >= 0) out(r, c) = x[idx(r, c)];
  return out;
}

// Maps each neighborhood column to the owning neighbor's position in
// neighbor_ids (for looking up beta_j of that column block).
std::vector<int> column_neighbor(const SubsystemView& v) {
  std::vector<int> owner(v.n_Ni, 0);
  for (size_t j = 0; j < v.neighbor_ids.size(); ++j)
    for (int k = 0; k < v.block_size[j]; ++k) owner[v.block_offset[j] + k] = static_cast<int>(j);
  return owner;
}

// Lower-right S-procedure body sum_j mult_j * Z_j embedded at the j-th
// diagonal block, shifted by `base` inside an open PSD block.
void emit_multiplier_sum(ConicProblem& p, const SubsystemView& v,
                         const DistributedTerminalDesign& design, const std::vector<int>& mult,
                         int base) {
  for (size_t j = 0; j < v.neighbor_ids.size(); ++j) {
    const MatrixXd& Zj = design.Z[v.neighbor_ids[j]];
    int off = v.block_offset[j];
    for (int c = 0; c < Zj.cols(); ++c)
      for (int r = c; r < Zj.rows(); ++r)
        if (Zj(r, c) != 0.0) p.add_psd_coeff(base + off + r, base + off + c, mult[j], Zj(r, c));
  }
}

// Budget row: cap - sum(mult) >= 0 where cap is a constant or a variable.
void emit_budget_row(ConicProblem& p, const std::vector<int>& mult, int cap_var, double cap_const) {
  p.begin_block(ConeKind::Nonneg, 1);
  if (cap_var >= 0)
    p.add_coeff(0, cap_var, 1.0);
  else
    p.add_constant(0, cap_const);
  for (int v : mult) p.add_coeff(0, v, -1.0);
  p.end_block();
}

// Entry (r, c) of A_Ni B(beta) + B_i Y_Ni as coefficients into an open PSD
// block at position (br, bc). Used transposed by C1 and C4.
void emit_closed_loop_entry(ConicProblem& p, const SubsystemView& v,
                            const AdaptiveVarLayout& vars, const std::vector<int>& col_owner,
                            int i, int r, int c, int br, int bc) {
  int beta_col = vars.beta[v.neighbor_ids[col_owner[c]]];
  if (v.A_Ni(r, c) != 0.0) p.add_psd_coeff(br, bc, beta_col, v.A_Ni(r, c));
  for (int k = 0; k < v.m_i; ++k)
    if (v.B_i(r, k) != 0.0) p.add_psd_coeff(br, bc, vars.Y[i](k, c), v.B_i(r, k));
}

}  // namespace

ConicProblem build_theorem1_synthesis(const ValidatedSystem& sys, Theorem1Vars& vars) {
  const auto& s = sys.get();
  ConicProblem p;
  vars.E = alloc_sym(p, s.n());
  vars.Y = alloc_mat(p, s.m(), s.n());
  vars.S = alloc_sym(p, s.n());
  emit_synthesis(p, s.A, s.B, sym_sqrt(s.Q), sym_sqrt(s.R), vars.E, vars.Y, vars.S);
  return p;
}

CentralizedTerminal solve_theorem1(const ValidatedSystem& sys, const ToleranceConfig& tol) {
  Theorem1Vars vars;
  ConicProblem p = build_theorem1_synthesis(sys, vars);
  ConicSolution sol = solve_tight(p, tol);
  if (!sol.optimal())
    throw Error(ErrorKind::SynthesisInfeasible,
                std::string("Lyapunov synthesis failed: solver status ") + to_string(sol.status));
  MatrixXd E = read_values(vars.E, sol.x);
  CentralizedTerminal out;
  out.P_c = sym_inv(E, 1e12, "synthesis Gram matrix E");
  out.K_c = read_values(vars.Y, sol.x) * out.P_c;
  out.P_c = 0.5 * (out.P_c + out.P_c.transpose());
  return out;
}

DistributedTerminalDesign build_design_phase(const CoupledSystem& cs, const DesignOptions& opts,
                                             const ToleranceConfig& tol) {
  if (opts.decrease_margin < 0.0)
    throw Error(ErrorKind::BuildError, "decrease_margin must be nonnegative");
  const int n = cs.n(), m = cs.m(), M = cs.M();
  ConicProblem p;
  Eigen::MatrixXi E = Eigen::MatrixXi::Constant(n, n, -1);
  Eigen::MatrixXi Y = Eigen::MatrixXi::Constant(m, n, -1);
  Eigen::MatrixXi S = Eigen::MatrixXi::Constant(n, n, -1);

  for (int i = 0; i < M; ++i) {
    const auto& v = cs.views[i];
    Eigen::MatrixXi Ei = alloc_sym(p, v.n_i);
    Eigen::MatrixXi Yi = alloc_mat(p, v.m_i, v.n_Ni);
    Eigen::MatrixXi Si = alloc_sym(p, v.n_i);
    for (int a = 0; a < v.n_i; ++a)
      for (int b = 0; b < v.n_i; ++b) {
        E(v.own_states[a], v.own_states[b]) = Ei(a, b);
        S(v.own_states[a], v.own_states[b]) = Si(a, b);
      }
    for (int r = 0; r < v.m_i; ++r)
      for (int c = 0; c < v.n_Ni; ++c) Y(v.own_inputs[r], v.nbhd_states[c]) = Yi(r, c);
  }
  emit_synthesis(p, cs.sys.A, cs.sys.B, sym_sqrt(cs.sys.Q), sym_sqrt(cs.sys.R), E, Y, S);
  ConicSolution sol = solve_tight(p, tol);
  if (!sol.optimal())
    throw Error(ErrorKind::StructuredSynthesisInfeasible,
                std::string("block-diagonal synthesis failed: solver status ") +
                    to_string(sol.status));

  MatrixXd Eval = read_values(E, sol.x);
  MatrixXd Yval = read_values(Y, sol.x);
  MatrixXd Kglobal = MatrixXd::Zero(m, n);

  DistributedTerminalDesign d;
  d.P.resize(M);
  d.Z.resize(M);
  d.K_ref.resize(M);
  d.P_inv.resize(M);
  d.Z_inv.resize(M);
  d.Q_sqrt.resize(M);
  d.R_sqrt.resize(M);

  for (int i = 0; i < M; ++i) {
    const auto& v = cs.views[i];
    MatrixXd Ei(v.n_i, v.n_i);
    for (int a = 0; a < v.n_i; ++a)
      for (int b = 0; b < v.n_i; ++b) Ei(a, b) = Eval(v.own_states[a], v.own_states[b]);
    MatrixXd Einv = sym_inv(Ei, opts.cond_limit, "design block E_i");
    d.P[i] = (1.0 + opts.decrease_margin) * Einv;
    // K columns for this block: Y[:, own] * E_i^{-1}
    MatrixXd Ycols(m, v.n_i);
    for (int b = 0; b < v.n_i; ++b) Ycols.col(b) = Yval.col(v.own_states[b]);
    MatrixXd Kcols = Ycols * Einv;
    for (int b = 0; b < v.n_i; ++b) Kglobal.col(v.own_states[b]) = Kcols.col(b);
  }
  for (int i = 0; i < M; ++i) {
    const auto& v = cs.views[i];
    MatrixXd Ki(v.m_i, v.n_Ni);
    for (int r = 0; r < v.m_i; ++r)
      for (int c = 0; c < v.n_Ni; ++c) Ki(r, c) = Kglobal(v.own_inputs[r], v.nbhd_states[c]);
    d.K_ref[i] = Ki;
    d.Z[i] = opts.identity_shape ? MatrixXd::Identity(v.n_i, v.n_i) : d.P[i];
    d.P_inv[i] = sym_inv(d.P[i], opts.cond_limit, "design block P_i");
    d.Z_inv[i] = sym_inv(d.Z[i], opts.cond_limit, "terminal shape Z_i");
    d.Q_sqrt[i] = sym_sqrt(v.Q_Ni);
    d.R_sqrt[i] = sym_sqrt(v.R_i);
  }

  // The reference gains must satisfy the summed Lyapunov decrease; this is
  // the structured-synthesis LMI read back through the subsystem views, so a
  // failure here means the solve was too loose to trust.
  MatrixXd decrease = MatrixXd::Zero(n, n);
  for (int i = 0; i < M; ++i) {
    const auto& v = cs.views[i];
    MatrixXd Acl = v.A_Ni + v.B_i * d.K_ref[i];
    MatrixXd Href = Acl.transpose() * d.P[i] * Acl + v.Q_Ni + d.K_ref[i].transpose() * v.R_i * d.K_ref[i];
    int own = v.block_offset[v.neighbor_pos(i)];
    Href.block(own, own, v.n_i, v.n_i) -= d.P[i];
    decrease += cs.W[i].transpose() * Href * cs.W[i];
  }
  double scale = 1.0;
  for (int i = 0; i < M; ++i) scale = std::max(scale, d.P[i].norm());
  if (psd_residual(-decrease) < -1e-5 * scale)
    throw Error(ErrorKind::StructuredSynthesisInfeasible,
                "reference gains fail the summed decrease check");
  return d;
}

ToleranceConfig adaptive_tolerance() {
  ToleranceConfig tol;
  tol.feas_tol = 1e-7;
  tol.gap_tol = 1e-6;
  return tol;
}

AdaptiveVarLayout allocate_adaptive_vars(const CoupledSystem& cs, ConicProblem& p) {
  AdaptiveVarLayout vars;
  const int M = cs.M();
  vars.beta.resize(M);
  vars.Y.resize(M);
  vars.H.resize(M);
  vars.lambda.resize(M);
  vars.tau.resize(M);
  vars.rho.resize(M);

  std::vector<int> nonneg;
  for (int i = 0; i < M; ++i) {
    const auto& v = cs.views[i];
    const int nb = static_cast<int>(v.neighbor_ids.size());
    vars.beta[i] = p.add_vars(1);
    nonneg.push_back(vars.beta[i]);
    vars.Y[i] = alloc_mat(p, v.m_i, v.n_Ni);
    vars.H[i] = alloc_sym(p, v.n_Ni);
    vars.lambda[i].resize(nb);
    for (int j = 0; j < nb; ++j) {
      vars.lambda[i][j] = p.add_vars(1);
      nonneg.push_back(vars.lambda[i][j]);
    }
    vars.tau[i] = alloc_mat(p, static_cast<int>(v.G_Ni.rows()), nb);
    vars.rho[i] = alloc_mat(p, static_cast<int>(v.H_i.rows()), nb);
    for (int r = 0; r < vars.tau[i].rows(); ++r)
      for (int j = 0; j < nb; ++j) nonneg.push_back(vars.tau[i](r, j));
    for (int r = 0; r < vars.rho[i].rows(); ++r)
      for (int j = 0; j < nb; ++j) nonneg.push_back(vars.rho[i](r, j));
  }
  p.begin_block(ConeKind::Nonneg, static_cast<int>(nonneg.size()));
  for (size_t k = 0; k < nonneg.size(); ++k) p.add_coeff(static_cast<int>(k), nonneg[k], 1.0);
  p.end_block();
  return vars;
}

void build_c1(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, ConicProblem& p) {
  const int i = view.index;
  const auto col_owner = column_neighbor(view);
  p.begin_psd_block(view.n_i + view.n_Ni);
  const MatrixXd& Zinv = design.Z_inv[i];
  for (int c = 0; c < view.n_i; ++c)
    for (int r = c; r < view.n_i; ++r)
      if (Zinv(r, c) != 0.0) p.add_psd_coeff(r, c, vars.beta[i], Zinv(r, c));
  for (int r = 0; r < view.n_Ni; ++r)
    for (int c = 0; c < view.n_i; ++c)
      emit_closed_loop_entry(p, view, vars, col_owner, i, c, r, view.n_i + r, c);
  emit_multiplier_sum(p, view, design, vars.lambda[i], view.n_i);
  p.end_block();
  emit_budget_row(p, vars.lambda[i], vars.beta[i], 0.0);
}

void build_c2(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, int row, ConicProblem& p) {
  if (row < 0 || row >= view.G_Ni.rows())
    throw Error(ErrorKind::BuildError, "state-constraint row out of range");
  const int i = view.index;
  const auto col_owner = column_neighbor(view);
  p.begin_psd_block(1 + view.n_Ni);
  p.add_psd_constant(0, 0, view.g_Ni[row]);
  for (int c = 0; c < view.n_Ni; ++c)
    if (view.G_Ni(row, c) != 0.0)
      p.add_psd_coeff(1 + c, 0, vars.beta[view.neighbor_ids[col_owner[c]]], view.G_Ni(row, c));
  std::vector<int> mult(view.neighbor_ids.size());
  for (size_t j = 0; j < mult.size(); ++j) mult[j] = vars.tau[i](row, static_cast<int>(j));
  emit_multiplier_sum(p, view, design, mult, 1);
  p.end_block();
  emit_budget_row(p, mult, -1, view.g_Ni[row]);
}

void build_c3(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, int row, ConicProblem& p) {
  if (row < 0 || row >= view.H_i.rows())
    throw Error(ErrorKind::BuildError, "input-constraint row out of range");
  const int i = view.index;
  p.begin_psd_block(1 + view.n_Ni);
  p.add_psd_constant(0, 0, view.h_i[row]);
  for (int c = 0; c < view.n_Ni; ++c)
    for (int k = 0; k < view.m_i; ++k)
      if (view.H_i(row, k) != 0.0) p.add_psd_coeff(1 + c, 0, vars.Y[i](k, c), view.H_i(row, k));
  std::vector<int> mult(view.neighbor_ids.size());
  for (size_t j = 0; j < mult.size(); ++j) mult[j] = vars.rho[i](row, static_cast<int>(j));
  emit_multiplier_sum(p, view, design, mult, 1);
  p.end_block();
  emit_budget_row(p, mult, -1, view.h_i[row]);
}

void build_c4(const SubsystemView& view, const DistributedTerminalDesign& design,
              const AdaptiveVarLayout& vars, ConicProblem& p) {
  const int i = view.index;
  const auto col_owner = column_neighbor(view);
  const int o2 = view.n_i, o3 = o2 + view.n_Ni, o4 = o3 + view.n_Ni;
  const MatrixXd& Pinv = design.P_inv[i];
  const MatrixXd& Qs = design.Q_sqrt[i];
  const MatrixXd& Rs = design.R_sqrt[i];

  // P_i embedded at subsystem i's own diagonal block of the neighborhood.
  MatrixXd Pii = MatrixXd::Zero(view.n_Ni, view.n_Ni);
  int own = view.block_offset[view.neighbor_pos(i)];
  Pii.block(own, own, view.n_i, view.n_i) = design.P[i];

  p.begin_psd_block(o4 + view.m_i);
  for (int c = 0; c < view.n_i; ++c)
    for (int r = c; r < view.n_i; ++r)
      if (Pinv(r, c) != 0.0) p.add_psd_coeff(r, c, vars.beta[i], Pinv(r, c));
  for (int r = 0; r < view.n_Ni; ++r)
    for (int c = 0; c < view.n_i; ++c)
      emit_closed_loop_entry(p, view, vars, col_owner, i, c, r, o2 + r, c);
  for (int c = 0; c < view.n_Ni; ++c)
    for (int r = c; r < view.n_Ni; ++r) {
      if (Pii(r, c) != 0.0) p.add_psd_coeff(o2 + r, o2 + c, vars.beta[i], Pii(r, c));
      p.add_psd_coeff(o2 + r, o2 + c, vars.H[i](r, c), 1.0);
    }
  // rows 3 and 4: Q^{1/2} B(beta) and R^{1/2} Y against block 2
  for (int r = 0; r < view.n_Ni; ++r)
    for (int c = 0; c < view.n_Ni; ++c)
      if (Qs(r, c) != 0.0)
        p.add_psd_coeff(o3 + r, o2 + c, vars.beta[view.neighbor_ids[col_owner[c]]], Qs(r, c));
  for (int r = 0; r < view.n_Ni; ++r) p.add_psd_coeff(o3 + r, o3 + r, vars.beta[i], 1.0);
  for (int r = 0; r < view.m_i; ++r)
    for (int c = 0; c < view.n_Ni; ++c)
      for (int k = 0; k < view.m_i; ++k)
        if (Rs(r, k) != 0.0) p.add_psd_coeff(o4 + r, o2 + c, vars.Y[i](k, c), Rs(r, k));
  for (int r = 0; r < view.m_i; ++r) p.add_psd_coeff(o4 + r, o4 + r, vars.beta[i], 1.0);
  p.end_block();
}

void build_c5(const CoupledSystem& cs, const AdaptiveVarLayout& vars, ConicProblem& p) {
  p.begin_psd_block(cs.n());
  for (int i = 0; i < cs.M(); ++i) {
    const auto& v = cs.views[i];
    for (int r = 0; r < v.n_Ni; ++r)
      for (int c = 0; c < v.n_Ni; ++c) {
        int gr = v.nbhd_states[r], gc = v.nbhd_states[c];
        if (gr < gc) continue;
        p.add_psd_coeff(gr, gc, vars.H[i](r, c), -1.0);
      }
  }
  p.end_block();
}

void build_c6(const std::vector<int>& x_terminal, const SubsystemView& view,
              const DistributedTerminalDesign& design, const AdaptiveVarLayout& vars,
              ConicProblem& p) {
  if (static_cast<int>(x_terminal.size()) != view.n_i)
    throw Error(ErrorKind::BuildError, "terminal state block has wrong dimension");
  const int i = view.index;
  // The corner must carry Z_i^{-1} for the Schur complement to reduce to
  // x'Z_i x <= beta_i^2, the same family C1 keeps invariant.
  const MatrixXd& Zi = design.Z_inv[i];
  p.begin_psd_block(view.n_i + 1);
  for (int c = 0; c < view.n_i; ++c)
    for (int r = c; r < view.n_i; ++r)
      if (Zi(r, c) != 0.0) p.add_psd_coeff(r, c, vars.beta[i], Zi(r, c));
  for (int c = 0; c < view.n_i; ++c) p.add_psd_coeff(view.n_i, c, x_terminal[c], 1.0);
  p.add_psd_coeff(view.n_i, view.n_i, vars.beta[i], 1.0);
  p.end_block();
}

MatrixXd recover_gain(const SubsystemView& view, const DistributedTerminalDesign& design,
                      const MatrixXd& Y_i, const VectorXd& beta_all, double gain_tol) {
  if (beta_all[view.index] <= gain_tol) return design.K_ref[view.index];
  MatrixXd K = MatrixXd::Zero(view.m_i, view.n_Ni);
  for (size_t j = 0; j < view.neighbor_ids.size(); ++j) {
    int off = view.block_offset[j], len = view.block_size[j];
    double bj = beta_all[view.neighbor_ids[j]];
    if (bj <= gain_tol)
      K.middleCols(off, len) = design.K_ref[view.index].middleCols(off, len);
    else
      K.middleCols(off, len) = Y_i.middleCols(off, len) / bj;
  }
  return K;
}

}  // namespace admpc
