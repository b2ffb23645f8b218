#include "admpc/terminal_sets.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>

#include "admpc/error.hpp"
#include "admpc/parallel.hpp"

namespace admpc {

namespace {

// max a'x over {F x <= b}: +inf when unbounded, NaN when the LP failed.
// Never throws, so redundancy queries can run inside a parallel loop.
double lp_max(const VectorXd& a, const MatrixXd& F, const VectorXd& b) {
  const int n = static_cast<int>(a.size());
  ConicProblem p;
  int x = p.add_vars(n);
  for (int i = 0; i < n; ++i)
    if (a[i] != 0.0) p.add_objective(x + i, -a[i]);
  p.begin_block(ConeKind::Nonneg, static_cast<int>(F.rows()));
  for (int r = 0; r < F.rows(); ++r) {
    p.add_constant(r, b[r]);
    for (int i = 0; i < n; ++i)
      if (F(r, i) != 0.0) p.add_coeff(r, x + i, -F(r, i));
  }
  p.end_block();
  ConicSolution sol = solve(p);
  if (sol.status == SolveStatus::Unbounded) return std::numeric_limits<double>::infinity();
  if (!sol.optimal() && sol.primal_residual > 1e-6)
    return std::numeric_limits<double>::quiet_NaN();
  return -sol.objective;
}

MatrixXd keep_rows(const MatrixXd& F, const std::vector<int>& rows) {
  MatrixXd out(static_cast<int>(rows.size()), F.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<int>(r)) = F.row(rows[r]);
  return out;
}

VectorXd keep_entries(const VectorXd& b, const std::vector<int>& rows) {
  VectorXd out(static_cast<int>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) out[static_cast<int>(r)] = b[rows[r]];
  return out;
}

}  // namespace

double max_ellipsoid(const CentralizedTerminal& ct, const LtiSystem& sys) {
  const int n = sys.n();
  MatrixXd rows(sys.G.rows() + sys.H.rows(), n);
  VectorXd caps(rows.rows());
  rows.topRows(sys.G.rows()) = sys.G;
  caps.head(sys.G.rows()) = sys.g;
  rows.bottomRows(sys.H.rows()) = sys.H * ct.K_c;
  caps.tail(sys.H.rows()) = sys.h;

  Eigen::LLT<MatrixXd> llt(ct.P_c);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::BuildError, "terminal value matrix is not positive definite");

  double alpha = std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows.rows(); ++r) {
    VectorXd a = rows.row(r).transpose();
    double denom = a.dot(llt.solve(a));  // a' P^{-1} a
    if (denom <= 1e-14 * std::max(1.0, a.squaredNorm())) continue;  // row never binds
    alpha = std::min(alpha, caps[r] * caps[r] / denom);
  }
  if (!std::isfinite(alpha))
    throw Error(ErrorKind::BuildError, "no constraint row binds; the level is unbounded");
  return alpha;
}

PolyhedralSet gilbert_tan(const MatrixXd& A_K, const MatrixXd& C, const VectorXd& c,
                          const GilbertTanOptions& opts) {
  const int n = static_cast<int>(A_K.rows());
  if (A_K.cols() != n || C.cols() != n || c.size() != C.rows())
    throw Error(ErrorKind::DimensionMismatch, "closed-loop map and constraint rows disagree");
  if (n > opts.max_dim)
    throw Error(ErrorKind::BuildError,
                "dimension " + std::to_string(n) + " exceeds the guard of " +
                    std::to_string(opts.max_dim) + "; raise max_dim to override");
  if ((c.array() <= 0.0).any())
    throw Error(ErrorKind::OriginNotInterior, "every constraint bound must be positive");
  double rho = Eigen::EigenSolver<MatrixXd>(A_K).eigenvalues().cwiseAbs().maxCoeff();
  if (rho >= 1.0)
    throw Error(ErrorKind::NotStable,
                "closed-loop spectral radius " + std::to_string(rho) + " is not below one");

  const int base = static_cast<int>(C.rows());
  MatrixXd F = C;
  VectorXd b = c;
  MatrixXd power = A_K;  // candidate rows at step k are C * A_K^k
  bool closed = false;
  for (int k = 1; k <= opts.power_cap && !closed; ++k) {
    MatrixXd cand = C * power;
    std::vector<double> support(base);
    parallel_for(base, [&](int r) { support[r] = lp_max(cand.row(r).transpose(), F, b); });
    closed = true;
    for (int r = 0; r < base; ++r) {
      if (std::isinf(support[r]))
        throw Error(ErrorKind::BuildError, "constraint set is unbounded along a candidate row");
      if (std::isnan(support[r]))
        throw Error(ErrorKind::BuildError, "support LP did not converge");
      closed = closed && support[r] <= c[r] + opts.redundancy_tol;
    }
    if (!closed) {
      F.conservativeResize(F.rows() + base, n);
      F.bottomRows(base) = cand;
      b.conservativeResize(b.size() + base);
      b.tail(base) = c;
      power = power * A_K;
    }
  }
  if (!closed)
    throw Error(ErrorKind::IterationCapExceeded,
                "no power closed the set within " + std::to_string(opts.power_cap) + " steps");

  // Final pass: drop each row that the remaining rows already imply.
  std::vector<int> kept(static_cast<size_t>(F.rows()));
  for (size_t r = 0; r < kept.size(); ++r) kept[r] = static_cast<int>(r);
  for (int r = static_cast<int>(F.rows()) - 1; r >= 0; --r) {
    std::vector<int> others;
    for (int kr : kept)
      if (kr != r) others.push_back(kr);
    if (others.empty()) continue;
    double support = lp_max(F.row(r).transpose(), keep_rows(F, others), keep_entries(b, others));
    if (support <= b[r] + opts.redundancy_tol) kept = std::move(others);
  }
  return {keep_rows(F, kept), keep_entries(b, kept)};
}

bool contains(const PolyhedralSet& set, const VectorXd& x, double tol) {
  return ((set.A_f * x - set.b_f).array() <= tol).all();
}

bool contains(const EllipsoidalSet& set, const VectorXd& x, double tol) {
  return x.dot(set.Z * x) <= set.alpha + tol;
}

AdaptiveLevels read_adaptive_levels(const CoupledSystem& cs,
                                    const DistributedTerminalDesign& design,
                                    const AdaptiveVarLayout& vars, const VectorXd& x,
                                    double gain_tol) {
  AdaptiveLevels out;
  out.beta = VectorXd::Zero(cs.M());
  for (int i = 0; i < cs.M(); ++i) out.beta[i] = std::max(0.0, x[vars.beta[i]]);
  out.Y.resize(cs.M());
  out.K.resize(cs.M());
  for (int i = 0; i < cs.M(); ++i) {
    const auto& v = cs.views[i];
    out.Y[i] = MatrixXd::Zero(v.m_i, v.n_Ni);
    for (int r = 0; r < v.m_i; ++r)
      for (int cidx = 0; cidx < v.n_Ni; ++cidx) out.Y[i](r, cidx) = x[vars.Y[i](r, cidx)];
    out.K[i] = recover_gain(v, design, out.Y[i], out.beta, gain_tol);
  }
  return out;
}

ValidationReport verify_invariance_sampled(const CoupledSystem& cs,
                                           const DistributedTerminalDesign& design,
                                           const AdaptiveLevels& levels, int n_samples,
                                           std::uint64_t seed) {
  const int n = cs.n();
  const LtiSystem& sys = cs.sys;

  // Boundary map per subsystem: x_i = beta_i Z_i^{-1/2} u, |u| = 1.
  std::vector<MatrixXd> inv_sqrt(cs.M());
  for (int i = 0; i < cs.M(); ++i) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(design.Z[i]);
    inv_sqrt[i] = es.operatorInverseSqrt();
  }

  ValidationReport rep;
  rep.samples = n_samples;
  double inv = -std::numeric_limits<double>::infinity(), st = inv, in = inv, dec = inv,
         wdec = inv;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::uniform_real_distribution<double> unit01(0.0, 1.0);
  VectorXd x(n), u(cs.m());
  for (int s = 0; s < n_samples; ++s) {
    // One block pinned to its boundary keeps the sample on the boundary of
    // the product set; every fourth draw pins all of them (the extreme
    // points, which maximize the convex per-subsystem conditions).
    const int pinned = s % cs.M();
    const bool corner = (s % 4 == 3);
    for (int i = 0; i < cs.M(); ++i) {
      const auto& v = cs.views[i];
      VectorXd dir(v.n_i);
      for (int k = 0; k < v.n_i; ++k) dir[k] = gauss(rng);
      double norm = dir.norm();
      if (norm == 0.0) dir.setZero(); else dir /= norm;
      double radius = unit01(rng);
      if (corner || i == pinned) radius = 1.0;
      else radius = std::pow(radius, 1.0 / v.n_i);  // uniform over the ball
      VectorXd xi = levels.beta[i] * radius * (inv_sqrt[i] * dir);
      for (int k = 0; k < v.n_i; ++k) x[v.own_states[k]] = xi[k];
    }
    for (int i = 0; i < cs.M(); ++i) {
      const auto& v = cs.views[i];
      VectorXd ui = levels.K[i] * v.restrict_state(x);
      for (int k = 0; k < v.m_i; ++k) u[v.own_inputs[k]] = ui[k];
    }
    VectorXd xplus = sys.A * x + sys.B * u;

    double dsum = 0.0, dwsum = 0.0;
    for (int i = 0; i < cs.M(); ++i) {
      const auto& v = cs.views[i];
      VectorXd xi = VectorXd::Zero(v.n_i), xip = xi;
      for (int k = 0; k < v.n_i; ++k) {
        xi[k] = x[v.own_states[k]];
        xip[k] = xplus[v.own_states[k]];
      }
      inv = std::max(inv, xip.dot(design.Z[i] * xip) - levels.beta[i] * levels.beta[i]);
      VectorXd xni = v.restrict_state(x);
      VectorXd ui = v.restrict_input(u);
      double stage = xni.dot(v.Q_Ni * xni) + ui.dot(v.R_i * ui);
      double dv = xip.dot(design.P[i] * xip) - xi.dot(design.P[i] * xi) + stage;
      dsum += dv;
      dwsum += dv / std::max(levels.beta[i], 1e-12);
    }
    dec = std::max(dec, dsum);
    wdec = std::max(wdec, dwsum);
    st = std::max(st, (sys.G * x - sys.g).maxCoeff());
    in = std::max(in, (sys.H * u - sys.h).maxCoeff());
  }
  rep.invariance = inv;
  rep.state = st;
  rep.input = in;
  rep.decrease_sum = dec;
  rep.decrease_weighted = wdec;
  return rep;
}

AdaptiveLevels fixed_levels_design(const CoupledSystem& cs,
                                   const DistributedTerminalDesign& design,
                                   const ToleranceConfig& tol) {
  ConicProblem p;
  AdaptiveVarLayout vars = allocate_adaptive_vars(cs, p);
  for (const auto& v : cs.views) {
    build_c1(v, design, vars, p);
    for (int l = 0; l < v.G_Ni.rows(); ++l) build_c2(v, design, vars, l, p);
    for (int l = 0; l < v.H_i.rows(); ++l) build_c3(v, design, vars, l, p);
    build_c4(v, design, vars, p);
  }
  build_c5(cs, vars, p);
  for (int i = 0; i < cs.M(); ++i) p.add_objective(vars.beta[i], -1.0);

  ConicSolution sol = solve(p, tol);
  bool usable = sol.optimal() || (sol.status == SolveStatus::NumericalTrouble &&
                                  sol.primal_residual <= 1e-6);
  if (!usable)
    throw Error(ErrorKind::SynthesisInfeasible,
                "fixed-level maximization failed: solver status " + std::string(to_string(sol.status)));
  return read_adaptive_levels(cs, design, vars, sol.x);
}

}  // namespace admpc
