#include "admpc/mpc.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <utility>

#include "admpc/error.hpp"

namespace admpc {

namespace {

MatrixXd sym_sqrt(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
  VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Terminal value matrix of the variant: the centralized P_c or the
// block-diagonal embedding of the per-subsystem P_i.
MatrixXd terminal_matrix(const MpcFormulation& form) {
  const int n = form.cs.n();
  if (form.variant == MpcVariant::CMax || form.variant == MpcVariant::CEllip)
    return form.central.P_c;
  MatrixXd P = MatrixXd::Zero(n, n);
  for (int i = 0; i < form.cs.M(); ++i) {
    const auto& own = form.cs.views[i].own_states;
    const MatrixXd& Pi = form.design.P[i];
    for (size_t r = 0; r < own.size(); ++r)
      for (size_t c = 0; c < own.size(); ++c) P(own[r], own[c]) += Pi(r, c);
  }
  return P;
}

bool is_decoupled(MpcVariant v) {
  return v == MpcVariant::DFixed || v == MpcVariant::DAdaptive || v == MpcVariant::DAd0;
}

void check_formulation(const MpcFormulation& form, const VectorXd& x0) {
  const int n = form.cs.n();
  if (x0.size() != n) throw Error(ErrorKind::DimensionMismatch, "x0 length != state dimension");
  if (form.T < 1) throw Error(ErrorKind::BuildError, "horizon must be >= 1");
  switch (form.variant) {
    case MpcVariant::CMax:
      if (form.terminal_poly.A_f.rows() == 0 || form.terminal_poly.A_f.cols() != n)
        throw Error(ErrorKind::BuildError, "CMax formulation lacks a terminal polytope");
      if (form.central.P_c.rows() != n)
        throw Error(ErrorKind::BuildError, "CMax formulation lacks a terminal cost");
      break;
    case MpcVariant::CEllip:
      if (form.central.P_c.rows() != n)
        throw Error(ErrorKind::BuildError, "CEllip formulation lacks a terminal cost");
      if (!(form.alpha_star > 0.0))
        throw Error(ErrorKind::BuildError, "CEllip formulation needs a positive level");
      break;
    case MpcVariant::DFixed:
    case MpcVariant::DAd0:
      if (static_cast<int>(form.fixed.beta.size()) != form.cs.M())
        throw Error(ErrorKind::BuildError, "fixed-level formulation lacks per-subsystem levels");
      [[fallthrough]];
    case MpcVariant::DAdaptive:
      if (static_cast<int>(form.design.P.size()) != form.cs.M())
        throw Error(ErrorKind::BuildError, "decoupled formulation lacks a terminal design");
      break;
  }
}

}  // namespace

const char* to_string(MpcVariant v) {
  switch (v) {
    case MpcVariant::CMax: return "C_Max";
    case MpcVariant::CEllip: return "C_Ellip";
    case MpcVariant::DFixed: return "D_Fixed";
    case MpcVariant::DAdaptive: return "D_Adaptive";
    case MpcVariant::DAd0: return "D_Ad0";
  }
  return "?";
}

MpcFormulation make_cmax(const CoupledSystem& cs, const CentralizedTerminal& ct,
                         const PolyhedralSet& terminal, int T) {
  MpcFormulation f;
  f.variant = MpcVariant::CMax;
  f.T = T;
  f.cs = cs;
  f.central = ct;
  f.terminal_poly = terminal;
  return f;
}

MpcFormulation make_cellip(const CoupledSystem& cs, const CentralizedTerminal& ct,
                           double alpha_star, int T) {
  MpcFormulation f;
  f.variant = MpcVariant::CEllip;
  f.T = T;
  f.cs = cs;
  f.central = ct;
  f.alpha_star = alpha_star;
  return f;
}

MpcFormulation make_dfixed(const CoupledSystem& cs, const DistributedTerminalDesign& design,
                           const AdaptiveLevels& levels, int T) {
  MpcFormulation f;
  f.variant = MpcVariant::DFixed;
  f.T = T;
  f.cs = cs;
  f.design = design;
  f.fixed = levels;
  return f;
}

MpcFormulation make_dadaptive(const CoupledSystem& cs, const DistributedTerminalDesign& design,
                              int T) {
  MpcFormulation f;
  f.variant = MpcVariant::DAdaptive;
  f.T = T;
  f.cs = cs;
  f.design = design;
  f.tol = adaptive_tolerance();
  return f;
}

ConicProblem build(const MpcFormulation& form, const VectorXd& x0, MpcVars* vars_out) {
  check_formulation(form, x0);
  const LtiSystem& sys = form.cs.sys;
  const int n = sys.n(), m = sys.m(), T = form.T;

  ConicProblem p;
  MpcVars vars;
  vars.n = n;
  vars.m = m;
  vars.T = T;
  vars.x0 = p.add_vars(n * (T + 1));
  vars.u0 = p.add_vars(m * T);
  vars.w = p.add_vars(1);
  p.add_objective(vars.w, 1.0);

  // Initial condition and dynamics as equality blocks.
  p.begin_block(ConeKind::Zero, n);
  for (int k = 0; k < n; ++k) {
    p.add_coeff(k, vars.xvar(0, k), 1.0);
    p.add_constant(k, -x0[k]);
  }
  p.end_block();
  for (int t = 0; t < T; ++t) {
    p.begin_block(ConeKind::Zero, n);
    for (int r = 0; r < n; ++r) {
      p.add_coeff(r, vars.xvar(t + 1, r), 1.0);
      for (int c = 0; c < n; ++c)
        if (sys.A(r, c) != 0.0) p.add_coeff(r, vars.xvar(t, c), -sys.A(r, c));
      for (int c = 0; c < m; ++c)
        if (sys.B(r, c) != 0.0) p.add_coeff(r, vars.uvar(t, c), -sys.B(r, c));
    }
    p.end_block();
  }

  // Epigraph of the quadratic objective: with L the stacked square roots of
  // the stage and terminal weights, J = |L xi|^2 <= w is the cone row
  // (w+1, 2 L xi, w-1).
  const MatrixXd Qs = sym_sqrt(sys.Q);
  const MatrixXd Rs = sym_sqrt(sys.R);
  const MatrixXd Ps = sym_sqrt(terminal_matrix(form));
  const int socdim = 2 + T * (n + m) + n;
  p.begin_block(ConeKind::SecondOrder, socdim);
  int row = 0;
  p.add_coeff(row, vars.w, 1.0);
  p.add_constant(row, 1.0);
  ++row;
  for (int t = 0; t < T; ++t)
    for (int r = 0; r < n; ++r, ++row)
      for (int c = 0; c < n; ++c)
        if (Qs(r, c) != 0.0) p.add_coeff(row, vars.xvar(t, c), 2.0 * Qs(r, c));
  for (int t = 0; t < T; ++t)
    for (int r = 0; r < m; ++r, ++row)
      for (int c = 0; c < m; ++c)
        if (Rs(r, c) != 0.0) p.add_coeff(row, vars.uvar(t, c), 2.0 * Rs(r, c));
  for (int r = 0; r < n; ++r, ++row)
    for (int c = 0; c < n; ++c)
      if (Ps(r, c) != 0.0) p.add_coeff(row, vars.xvar(T, c), 2.0 * Ps(r, c));
  p.add_coeff(row, vars.w, 1.0);
  p.add_constant(row, -1.0);
  p.end_block();

  // Path constraints. x0 is data (the caller screens it), so state rows
  // start at t=1; the terminal state is covered by the terminal set.
  const int q = static_cast<int>(sys.G.rows());
  const int r_in = static_cast<int>(sys.H.rows());
  const int npath = (T - 1) * q + T * r_in;
  if (npath > 0) {
    p.begin_block(ConeKind::Nonneg, npath);
    row = 0;
    for (int t = 1; t < T; ++t)
      for (int l = 0; l < q; ++l, ++row) {
        p.add_constant(row, sys.g[l]);
        for (int c = 0; c < n; ++c)
          if (sys.G(l, c) != 0.0) p.add_coeff(row, vars.xvar(t, c), -sys.G(l, c));
      }
    for (int t = 0; t < T; ++t)
      for (int l = 0; l < r_in; ++l, ++row) {
        p.add_constant(row, sys.h[l]);
        for (int c = 0; c < m; ++c)
          if (sys.H(l, c) != 0.0) p.add_coeff(row, vars.uvar(t, c), -sys.H(l, c));
      }
    p.end_block();
  }

  // Terminal blocks.
  switch (form.variant) {
    case MpcVariant::CMax: {
      const MatrixXd& Af = form.terminal_poly.A_f;
      const VectorXd& bf = form.terminal_poly.b_f;
      p.begin_block(ConeKind::Nonneg, static_cast<int>(Af.rows()));
      for (int l = 0; l < Af.rows(); ++l) {
        p.add_constant(l, bf[l]);
        for (int c = 0; c < n; ++c)
          if (Af(l, c) != 0.0) p.add_coeff(l, vars.xvar(T, c), -Af(l, c));
      }
      p.end_block();
      break;
    }
    case MpcVariant::CEllip: {
      const MatrixXd Pc_s = sym_sqrt(form.central.P_c);
      p.begin_block(ConeKind::SecondOrder, 1 + n);
      p.add_constant(0, std::sqrt(form.alpha_star));
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          if (Pc_s(r, c) != 0.0) p.add_coeff(1 + r, vars.xvar(T, c), Pc_s(r, c));
      p.end_block();
      break;
    }
    case MpcVariant::DFixed:
    case MpcVariant::DAd0: {
      for (int i = 0; i < form.cs.M(); ++i) {
        const auto& own = form.cs.views[i].own_states;
        const MatrixXd Zs = sym_sqrt(form.design.Z[i]);
        const int ni = static_cast<int>(own.size());
        p.begin_block(ConeKind::SecondOrder, 1 + ni);
        p.add_constant(0, form.fixed.beta[i]);
        for (int r = 0; r < ni; ++r)
          for (int c = 0; c < ni; ++c)
            if (Zs(r, c) != 0.0) p.add_coeff(1 + r, vars.xvar(T, own[c]), Zs(r, c));
        p.end_block();
      }
      break;
    }
    case MpcVariant::DAdaptive: {
      vars.adaptive = allocate_adaptive_vars(form.cs, p);
      for (int i = 0; i < form.cs.M(); ++i) {
        const SubsystemView& view = form.cs.views[i];
        build_c1(view, form.design, vars.adaptive, p);
        for (int l = 0; l < view.g_Ni.size(); ++l) build_c2(view, form.design, vars.adaptive, l, p);
        for (int l = 0; l < view.h_i.size(); ++l) build_c3(view, form.design, vars.adaptive, l, p);
        build_c4(view, form.design, vars.adaptive, p);
      }
      build_c5(form.cs, vars.adaptive, p);
      for (int i = 0; i < form.cs.M(); ++i) {
        std::vector<int> xterm;
        for (int k : form.cs.views[i].own_states) xterm.push_back(vars.xvar(T, k));
        build_c6(xterm, form.cs.views[i], form.design, vars.adaptive, p);
      }
      break;
    }
  }

  if (vars_out) *vars_out = vars;
  return p;
}

MpcSolution solve_mpc(const MpcFormulation& form, const VectorXd& x0) {
  MpcSolution out;
  const LtiSystem& sys = form.cs.sys;
  // An initial state outside the state polytope admits no solution; skip the
  // solver and report a clean infeasibility.
  if (sys.G.rows() > 0 && (sys.G * x0 - sys.g).maxCoeff() > 1e-9) {
    out.status = SolveStatus::Infeasible;
    return out;
  }

  MpcVars vars;
  ConicProblem p = build(form, x0, &vars);
  ConicSolution sol = solve(p, form.tol);
  out.raw = sol;
  out.status = sol.status;
  out.solve_ms = sol.wall_ms;
  out.objective = sol.objective;

  bool usable = sol.status == SolveStatus::Optimal;
  if (!usable && sol.status == SolveStatus::NumericalTrouble) {
    // Best iterate of a stalled solve: accept when it is feasible and the
    // gap pins the objective well inside the experiment tolerances.
    usable = sol.primal_residual <= 1e-6 && sol.dual_residual <= 1e-4 &&
             sol.duality_gap <= 1e-4 * (1.0 + std::abs(sol.objective));
  }
  if (!usable) return out;

  const int n = sys.n(), m = sys.m(), T = form.T;
  out.feasible = true;
  out.x.resize(n, T + 1);
  for (int t = 0; t <= T; ++t) out.x.col(t) = sol.x.segment(vars.xvar(t, 0), n);
  out.u.resize(m, T);
  for (int t = 0; t < T; ++t) out.u.col(t) = sol.x.segment(vars.uvar(t, 0), m);

  if (form.variant == MpcVariant::DAdaptive)
    out.levels = read_adaptive_levels(form.cs, form.design, vars.adaptive, sol.x);
  else if (is_decoupled(form.variant))
    out.levels = form.fixed;
  if (out.levels.beta.size() > 0) out.alpha = out.levels.beta.array().square();
  return out;
}

MpcFormulation fix_alpha(const MpcFormulation& form, const MpcSolution& sol) {
  if (form.variant != MpcVariant::DAdaptive)
    throw Error(ErrorKind::BuildError, "fix_alpha expects a DAdaptive formulation");
  if (!sol.feasible || sol.levels.beta.size() != form.cs.M())
    throw Error(ErrorKind::BuildError, "fix_alpha needs a feasible adaptive solution");
  MpcFormulation frozen = form;
  frozen.variant = MpcVariant::DAd0;
  frozen.fixed = sol.levels;
  frozen.tol = ToleranceConfig{};
  return frozen;
}

double recompute_objective(const MpcFormulation& form, const MatrixXd& x, const MatrixXd& u) {
  const LtiSystem& sys = form.cs.sys;
  double J = 0.0;
  for (int t = 0; t < form.T; ++t) J += global_stage_cost(sys, x.col(t), u.col(t));
  const VectorXd xT = x.col(form.T);
  return J + xT.dot(terminal_matrix(form) * xT);
}

double tail_violation(const MpcFormulation& form, const MpcSolution& sol) {
  if (!sol.feasible) throw Error(ErrorKind::BuildError, "tail check needs a feasible solution");
  const LtiSystem& sys = form.cs.sys;
  const int m = sys.m(), T = form.T;
  const VectorXd xT = sol.x.col(T);

  // Terminal input from the variant's gain.
  VectorXd uT(m);
  if (is_decoupled(form.variant)) {
    for (int i = 0; i < form.cs.M(); ++i) {
      const SubsystemView& view = form.cs.views[i];
      VectorXd ui = sol.levels.K[i] * view.restrict_state(xT);
      for (size_t k = 0; k < view.own_inputs.size(); ++k) uT[view.own_inputs[k]] = ui[k];
    }
  } else {
    uT = form.central.K_c * xT;
  }
  const VectorXd xNext = sys.A * xT + sys.B * uT;

  double v = -std::numeric_limits<double>::infinity();
  // Path constraints of the shifted sequence: states x_1..x_T land on
  // t=0..T-1 of the successor problem, inputs u_1..u_{T-1} plus the terminal
  // input on t=0..T-1.
  if (sys.G.rows() > 0)
    for (int t = 1; t <= T; ++t) v = std::max(v, (sys.G * sol.x.col(t) - sys.g).maxCoeff());
  if (sys.H.rows() > 0) {
    for (int t = 1; t < T; ++t) v = std::max(v, (sys.H * sol.u.col(t) - sys.h).maxCoeff());
    v = std::max(v, (sys.H * uT - sys.h).maxCoeff());
  }

  // Terminal membership of the appended state at the solution's own levels.
  switch (form.variant) {
    case MpcVariant::CMax:
      v = std::max(v, (form.terminal_poly.A_f * xNext - form.terminal_poly.b_f).maxCoeff());
      break;
    case MpcVariant::CEllip:
      v = std::max(v, xNext.dot(form.central.P_c * xNext) - form.alpha_star);
      break;
    default:
      for (int i = 0; i < form.cs.M(); ++i) {
        const auto& own = form.cs.views[i].own_states;
        VectorXd xi(own.size());
        for (size_t k = 0; k < own.size(); ++k) xi[k] = xNext[own[k]];
        const double beta = sol.levels.beta[i];
        v = std::max(v, xi.dot(form.design.Z[i] * xi) - beta * beta);
      }
      break;
  }
  return v;
}

RhTrace receding_horizon(const LtiSystem& sim_model, const MpcFormulation& form,
                         const VectorXd& x0, const RhOptions& opts) {
  if (sim_model.n() != form.cs.n() || sim_model.m() != form.cs.m())
    throw Error(ErrorKind::DimensionMismatch, "plant and prediction model dimensions differ");

  RhTrace trace;
  VectorXd x = x0;
  for (int t = 0; t < opts.max_steps; ++t) {
    if (x.lpNorm<Eigen::Infinity>() <= opts.conv_tol) {
      trace.converged = true;
      break;
    }
    MpcSolution sol = solve_mpc(form, x);
    trace.last_status = sol.status;
    if (!sol.feasible) {
      trace.infeasible_at = t;
      break;
    }
    RhStep step;
    step.t = t;
    step.x = x;
    step.u = sol.u.col(0);
    step.stage_cost = global_stage_cost(form.cs.sys, step.x, step.u);
    step.j_star = sol.objective;
    step.alpha = sol.alpha;
    step.status = sol.status;
    step.solve_ms = sol.solve_ms;
    step.tail = tail_violation(form, sol);
    x = sim_model.A * x + sim_model.B * step.u;
    trace.steps.push_back(std::move(step));
  }
  if (!trace.converged && trace.infeasible_at < 0 &&
      x.lpNorm<Eigen::Infinity>() <= opts.conv_tol)
    trace.converged = true;
  trace.final_state = x;
  return trace;
}

double closed_loop_cost(const RhTrace& trace) {
  double J = 0.0;
  for (const RhStep& s : trace.steps) J += s.stage_cost;
  return J;
}

}  // namespace admpc
