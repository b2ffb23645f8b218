// Homogeneous self-dual interior-point solver for the cone programs built by
// ConicProblem. Mehrotra predictor-corrector with Nesterov-Todd scaling over
// nonnegative, second-order and PSD cones; the reduced KKT system is solved
// densely with static regularization plus iterative refinement. Problem sizes
// in this library are small (hundreds of variables), so scalings and
// factorizations are recomputed from scratch every iteration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <vector>

#include "admpc/conic.hpp"

namespace admpc {

namespace {

constexpr double kStepFactor = 0.99;
constexpr double kRegEps = 1e-11;

struct ConeBlockC {
  ConeKind kind = ConeKind::Nonneg;
  int dim = 0;     // svec length for Psd
  int matdim = 0;  // Psd only
  int offset = 0;  // row offset in the stacked cone system
  std::vector<int> cols;
  MatrixXd D;  // dense dim x cols.size() slice of G (s = h - G x)
  VectorXd h;
};

struct Compiled {
  int nvar = 0;
  int neq = 0;
  int ncone = 0;
  int nu = 0;  // barrier degree
  VectorXd c;
  MatrixXd Aeq;
  VectorXd beq;
  std::vector<ConeBlockC> cones;
};

Compiled compile(const ConicProblem& p) {
  Compiled C;
  C.nvar = p.num_vars();
  if (C.nvar < 1) throw Error(ErrorKind::BuildError, "problem has no variables");
  C.c = Eigen::Map<const VectorXd>(p.objective().data(), C.nvar);

  for (const auto& b : p.blocks())
    if (b.kind == ConeKind::Zero) C.neq += b.rows;
  C.Aeq = MatrixXd::Zero(C.neq, C.nvar);
  C.beq = VectorXd::Zero(C.neq);

  int eq_row = 0;
  int cone_row = 0;
  for (const auto& b : p.blocks()) {
    if (b.kind == ConeKind::Zero) {
      // k + C x = 0  ->  A x = -k
      for (const auto& t : b.triplets) C.Aeq(eq_row + t.row, t.var) += t.coeff;
      for (int r = 0; r < b.rows; ++r) C.beq[eq_row + r] = -b.constants[r];
      eq_row += b.rows;
      continue;
    }
    ConeBlockC cb;
    cb.kind = b.kind;
    cb.dim = b.rows;
    cb.matdim = b.matdim;
    cb.offset = cone_row;
    cb.h = Eigen::Map<const VectorXd>(b.constants.data(), b.rows);
    std::vector<int> cols;
    for (const auto& t : b.triplets) cols.push_back(t.var);
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    cb.cols = cols;
    cb.D = MatrixXd::Zero(b.rows, static_cast<int>(cols.size()));
    for (const auto& t : b.triplets) {
      int lc = static_cast<int>(std::lower_bound(cols.begin(), cols.end(), t.var) - cols.begin());
      // k + C x in K  ->  s = h - G x with G = -C, h = k
      cb.D(t.row, lc) -= t.coeff;
    }
    cone_row += b.rows;
    switch (cb.kind) {
      case ConeKind::Nonneg: C.nu += cb.dim; break;
      case ConeKind::SecondOrder: C.nu += 1; break;
      case ConeKind::Psd: C.nu += cb.matdim; break;
      default: break;
    }
    C.cones.push_back(std::move(cb));
  }
  C.ncone = cone_row;
  return C;
}

VectorXd cone_matvec(const Compiled& C, const VectorXd& x) {
  VectorXd out = VectorXd::Zero(C.ncone);
  for (const auto& b : C.cones) {
    VectorXd xs(b.cols.size());
    for (size_t k = 0; k < b.cols.size(); ++k) xs[static_cast<int>(k)] = x[b.cols[k]];
    out.segment(b.offset, b.dim) = b.D * xs;
  }
  return out;
}

VectorXd cone_tmatvec(const Compiled& C, const VectorXd& v) {
  VectorXd out = VectorXd::Zero(C.nvar);
  for (const auto& b : C.cones) {
    VectorXd w = b.D.transpose() * v.segment(b.offset, b.dim);
    for (size_t k = 0; k < b.cols.size(); ++k) out[b.cols[k]] += w[static_cast<int>(k)];
  }
  return out;
}

VectorXd cone_constants(const Compiled& C) {
  VectorXd h(C.ncone);
  for (const auto& b : C.cones) h.segment(b.offset, b.dim) = b.h;
  return h;
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling and Jordan-algebra kernels, one entry per cone block.

struct Scaling {
  VectorXd w;       // Nonneg: W = diag(w)
  double beta = 0;  // SecondOrder: W = beta * (2 v v' - J)
  VectorXd v;
  MatrixXd R, Rinv;  // Psd: W u = svec(R' mat(u) R)
  VectorXd lambda;   // scaled point (eigenvalues only for Psd)
};

VectorXd soc_reflect(const VectorXd& u) {
  VectorXd r = -u;
  r[0] = u[0];
  return r;
}

bool compute_scaling(const ConeBlockC& b, const VectorXd& s, const VectorXd& z, Scaling& sc) {
  switch (b.kind) {
    case ConeKind::Nonneg: {
      if (s.minCoeff() <= 0.0 || z.minCoeff() <= 0.0) return false;
      sc.w = (s.array() / z.array()).sqrt();
      sc.lambda = (s.array() * z.array()).sqrt();
      return true;
    }
    case ConeKind::SecondOrder: {
      const int d = b.dim;
      double js = s[0] * s[0] - s.tail(d - 1).squaredNorm();
      double jz = z[0] * z[0] - z.tail(d - 1).squaredNorm();
      if (s[0] <= 0.0 || z[0] <= 0.0 || js <= 0.0 || jz <= 0.0) return false;
      double aa = std::sqrt(js), bb = std::sqrt(jz);
      sc.beta = std::sqrt(aa / bb);
      VectorXd sb = s / aa, zb = z / bb;
      double cc = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
      if (!(cc > 0.0)) return false;
      // Unit-J-norm NT point w, then its Jordan square root v, so that
      // 2vv' - J is W itself rather than the quadratic representation of w.
      VectorXd w = (sb + soc_reflect(zb)) / (2.0 * cc);
      w[0] += 1.0;
      sc.v = w / std::sqrt(2.0 * w[0]);
      // lambda = W z
      sc.lambda = sc.beta * (2.0 * sc.v * sc.v.dot(z) - soc_reflect(z));
      return true;
    }
    case ConeKind::Psd: {
      MatrixXd S = smat(s), Z = smat(z);
      Eigen::LLT<MatrixXd> ls(S), lz(Z);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
      MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      VectorXd sig = svd.singularValues();
      if (sig.minCoeff() <= 0.0) return false;
      VectorXd isq = sig.array().sqrt().inverse();
      sc.R = Ls * svd.matrixV() * isq.asDiagonal();
      sc.Rinv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
      sc.lambda = sig;
      return true;
    }
    default: return false;
  }
}

VectorXd W_apply(const ConeBlockC& b, const Scaling& sc, const VectorXd& u) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (sc.w.array() * u.array()).matrix();
    case ConeKind::SecondOrder: return sc.beta * (2.0 * sc.v * sc.v.dot(u) - soc_reflect(u));
    default: return svec(sc.R.transpose() * smat(u) * sc.R);
  }
}

VectorXd WT_apply(const ConeBlockC& b, const Scaling& sc, const VectorXd& u) {
  if (b.kind == ConeKind::Psd) return svec(sc.R * smat(u) * sc.R.transpose());
  return W_apply(b, sc, u);
}

VectorXd Winv_apply(const ConeBlockC& b, const Scaling& sc, const VectorXd& u) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (u.array() / sc.w.array()).matrix();
    case ConeKind::SecondOrder: {
      VectorXd jv = soc_reflect(sc.v);
      return (2.0 * jv * jv.dot(u) - soc_reflect(u)) / sc.beta;
    }
    default: return svec(sc.Rinv.transpose() * smat(u) * sc.Rinv);
  }
}

VectorXd WinvT_apply(const ConeBlockC& b, const Scaling& sc, const VectorXd& u) {
  if (b.kind == ConeKind::Psd) return svec(sc.Rinv * smat(u) * sc.Rinv.transpose());
  return Winv_apply(b, sc, u);
}

VectorXd jordan_prod(const ConeBlockC& b, const VectorXd& u, const VectorXd& v) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (u.array() * v.array()).matrix();
    case ConeKind::SecondOrder: {
      VectorXd out(b.dim);
      out[0] = u.dot(v);
      out.tail(b.dim - 1) = u[0] * v.tail(b.dim - 1) + v[0] * u.tail(b.dim - 1);
      return out;
    }
    default: {
      MatrixXd U = smat(u), V = smat(v);
      return svec(0.5 * (U * V + V * U));
    }
  }
}

// Solves lambda o x = d.
VectorXd jordan_div(const ConeBlockC& b, const Scaling& sc, const VectorXd& d) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (d.array() / sc.lambda.array()).matrix();
    case ConeKind::SecondOrder: {
      const VectorXd& l = sc.lambda;
      const int d1 = b.dim - 1;
      double det = l[0] * l[0] - l.tail(d1).squaredNorm();
      VectorXd out(b.dim);
      out[0] = (l[0] * d[0] - l.tail(d1).dot(d.tail(d1))) / det;
      out.tail(d1) = (d.tail(d1) - out[0] * l.tail(d1)) / l[0];
      return out;
    }
    default: {
      MatrixXd D = smat(d);
      const VectorXd& sig = sc.lambda;
      for (int r = 0; r < b.matdim; ++r)
        for (int c = 0; c < b.matdim; ++c) D(r, c) *= 2.0 / (sig[r] + sig[c]);
      return svec(D);
    }
  }
}

VectorXd lambda_sq(const ConeBlockC& b, const Scaling& sc) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (sc.lambda.array().square()).matrix();
    case ConeKind::SecondOrder: {
      VectorXd out(b.dim);
      out[0] = sc.lambda.squaredNorm();
      out.tail(b.dim - 1) = 2.0 * sc.lambda[0] * sc.lambda.tail(b.dim - 1);
      return out;
    }
    default: {
      MatrixXd L = sc.lambda.array().square().matrix().asDiagonal();
      return svec(L);
    }
  }
}

VectorXd unit_e(const ConeBlockC& b) {
  if (b.kind == ConeKind::Nonneg) return VectorXd::Ones(b.dim);
  if (b.kind == ConeKind::SecondOrder) {
    VectorXd e = VectorXd::Zero(b.dim);
    e[0] = 1.0;
    return e;
  }
  return svec(MatrixXd::Identity(b.matdim, b.matdim));
}

double cone_min_eig(const ConeBlockC& b, const VectorXd& u) {
  switch (b.kind) {
    case ConeKind::Nonneg: return u.minCoeff();
    case ConeKind::SecondOrder: return u[0] - u.tail(b.dim - 1).norm();
    default: return psd_residual(smat(u));
  }
}

// Largest t >= 0 such that step <= 1/t keeps lambda + step*du in the cone;
// 0 means unbounded (the CVXOPT max_step convention on the whitened
// direction).
double max_step_scaled(const ConeBlockC& b, const Scaling& sc, const VectorXd& du) {
  switch (b.kind) {
    case ConeKind::Nonneg: return (-du.array() / sc.lambda.array()).maxCoeff();
    case ConeKind::SecondOrder: {
      const VectorXd& l = sc.lambda;
      const int d1 = b.dim - 1;
      double c2 = du[0] * du[0] - du.tail(d1).squaredNorm();
      double c1 = 2.0 * (l[0] * du[0] - l.tail(d1).dot(du.tail(d1)));
      double c0 = l[0] * l[0] - l.tail(d1).squaredNorm();
      // Smallest positive root of c2 a^2 + c1 a + c0 = 0; c0 > 0 at an
      // interior point, so the first root crossed is the cone exit.
      double amin = std::numeric_limits<double>::infinity();
      if (std::abs(c2) < 1e-300) {
        if (c1 < 0.0) amin = -c0 / c1;
      } else {
        double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
          double sq = std::sqrt(disc);
          double qq = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
          for (double root : {qq / c2, (qq != 0.0 ? c0 / qq : -1.0)})
            if (root > 0.0) amin = std::min(amin, root);
        }
      }
      return std::isinf(amin) ? 0.0 : 1.0 / amin;
    }
    default: {
      MatrixXd D = smat(du);
      const VectorXd& sig = sc.lambda;
      for (int r = 0; r < b.matdim; ++r)
        for (int c = 0; c < b.matdim; ++c) D(r, c) /= std::sqrt(sig[r] * sig[c]);
      return -psd_residual(D);
    }
  }
}

// ---------------------------------------------------------------------------
// Reduced KKT system [H A'; A 0] with H = G' (W'W)^{-1} G, solved via dense
// LU on a statically regularized copy with refinement against the exact one.

struct KktSolver {
  const Compiled& C;
  const std::vector<Scaling>* scalings = nullptr;
  MatrixXd H;
  MatrixXd M;
  Eigen::PartialPivLU<MatrixXd> lu;
  bool ok = false;

  explicit KktSolver(const Compiled& comp) : C(comp) {}

  VectorXd wtw_inv(const VectorXd& v) const {
    VectorXd out(C.ncone);
    for (size_t k = 0; k < C.cones.size(); ++k) {
      const auto& b = C.cones[k];
      out.segment(b.offset, b.dim) =
          Winv_apply(b, (*scalings)[k], WinvT_apply(b, (*scalings)[k], v.segment(b.offset, b.dim)));
    }
    return out;
  }

  void factor(const std::vector<Scaling>& sc) {
    scalings = &sc;
    const int n = C.nvar, p = C.neq;
    H = MatrixXd::Zero(n, n);
    for (size_t k = 0; k < C.cones.size(); ++k) {
      const auto& b = C.cones[k];
      const int na = static_cast<int>(b.cols.size());
      if (na == 0) continue;
      MatrixXd Dbar(b.dim, na);
      for (int j = 0; j < na; ++j) Dbar.col(j) = WinvT_apply(b, sc[k], b.D.col(j));
      MatrixXd Hb = Dbar.transpose() * Dbar;
      for (int r = 0; r < na; ++r)
        for (int c = 0; c < na; ++c) H(b.cols[r], b.cols[c]) += Hb(r, c);
    }
    M.resize(n + p, n + p);
    M.topLeftCorner(n, n) = H + kRegEps * MatrixXd::Identity(n, n);
    M.topRightCorner(n, p) = C.Aeq.transpose();
    M.bottomLeftCorner(p, n) = C.Aeq;
    M.bottomRightCorner(p, p) = -kRegEps * MatrixXd::Identity(p, p);
    lu.compute(M);
    VectorXd probe = lu.solve(VectorXd::Ones(n + p));
    ok = probe.allFinite();
  }

  VectorXd wtw(const VectorXd& v) const {
    VectorXd out(C.ncone);
    for (size_t k = 0; k < C.cones.size(); ++k) {
      const auto& b = C.cones[k];
      out.segment(b.offset, b.dim) =
          WT_apply(b, (*scalings)[k], W_apply(b, (*scalings)[k], v.segment(b.offset, b.dim)));
    }
    return out;
  }

  bool solve_once(const VectorXd& pv, const VectorXd& qv, const VectorXd& rv, VectorXd& dx,
                  VectorXd& dy, VectorXd& dz) const {
    const int n = C.nvar, p = C.neq;
    VectorXd t = wtw_inv(rv);
    VectorXd rhs(n + p);
    rhs.head(n) = pv + cone_tmatvec(C, t);
    rhs.tail(p) = qv;
    VectorXd sol = lu.solve(rhs);
    VectorXd resid(n + p);
    resid.head(n) = H * sol.head(n) + C.Aeq.transpose() * sol.tail(p) - rhs.head(n);
    resid.tail(p) = C.Aeq * sol.head(n) - rhs.tail(p);
    sol -= lu.solve(resid);
    if (!sol.allFinite()) return false;
    dx = sol.head(n);
    dy = sol.tail(p);
    dz = wtw_inv(cone_matvec(C, dx) - rv);
    return dz.allFinite();
  }

  // Solves [0 A' G'; A 0 0; G 0 -W'W] (dx,dy,dz) = (p, q, r). Refinement runs
  // against the unreduced system because eliminating dz through (W'W)^{-1}
  // loses accuracy once the scaling is nearly singular at convergence.
  bool solve_k3(const VectorXd& pv, const VectorXd& qv, const VectorXd& rv, VectorXd& dx,
                VectorXd& dy, VectorXd& dz) const {
    if (!solve_once(pv, qv, rv, dx, dy, dz)) return false;
    VectorXd ex, ey, ez;
    const double scale = std::max({1.0, pv.norm(), qv.norm(), rv.norm()});
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 4; ++it) {
      VectorXd r1 = pv - cone_tmatvec(C, dz);
      if (C.neq > 0) r1 -= C.Aeq.transpose() * dy;
      VectorXd r2 = qv;
      if (C.neq > 0) r2 -= C.Aeq * dx;
      VectorXd r3 = rv - cone_matvec(C, dx) + wtw(dz);
      double rn = std::sqrt(r1.squaredNorm() + r2.squaredNorm() + r3.squaredNorm());
      if (rn <= 1e-14 * scale || rn >= 0.5 * prev) break;
      prev = rn;
      if (!solve_once(r1, r2, r3, ex, ey, ez)) return false;
      dx += ex;
      dy += ey;
      dz += ez;
    }
    return true;
  }
};

// Equality-only fallback: no cone rows means the minimizer is any stationary
// point of the Lagrangian.
ConicSolution solve_equality_only(const Compiled& C, const ToleranceConfig& tol) {
  ConicSolution sol;
  const int n = C.nvar, p = C.neq;
  MatrixXd M(n + p, n + p);
  M.topLeftCorner(n, n) = kRegEps * MatrixXd::Identity(n, n);
  M.topRightCorner(n, p) = C.Aeq.transpose();
  M.bottomLeftCorner(p, n) = C.Aeq;
  M.bottomRightCorner(p, p) = -kRegEps * MatrixXd::Identity(p, p);
  VectorXd rhs(n + p);
  rhs.head(n) = -C.c;
  rhs.tail(p) = C.beq;
  VectorXd xy = M.partialPivLu().solve(rhs);
  sol.x = xy.head(n);
  double pres = p > 0 ? (C.Aeq * sol.x - C.beq).norm() / std::max(1.0, C.beq.norm()) : 0.0;
  double dres = (C.Aeq.transpose() * xy.tail(p) + C.c).norm() / std::max(1.0, C.c.norm());
  sol.primal_residual = pres;
  sol.dual_residual = dres;
  sol.objective = C.c.dot(sol.x);
  sol.status = (xy.allFinite() && pres <= 1e4 * tol.feas_tol && dres <= 1e4 * tol.feas_tol)
                   ? SolveStatus::Optimal
                   : SolveStatus::NumericalTrouble;
  return sol;
}

}  // namespace

ConicSolution solve(const ConicProblem& problem, const ToleranceConfig& tol) {
  auto t_start = std::chrono::steady_clock::now();
  Compiled C = compile(problem);
  ConicSolution sol;
  auto finish = [&](ConicSolution s) {
    s.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return s;
  };

  if (C.ncone == 0) return finish(solve_equality_only(C, tol));

  const int n = C.nvar, p = C.neq, N = C.ncone;
  const VectorXd h = cone_constants(C);
  const VectorXd& b = C.beq;
  const VectorXd& c = C.c;

  std::vector<Scaling> sc(C.cones.size());
  KktSolver kkt(C);

  // Unit scaling for the initial point.
  for (size_t k = 0; k < C.cones.size(); ++k) {
    const auto& blk = C.cones[k];
    Scaling& s0 = sc[k];
    switch (blk.kind) {
      case ConeKind::Nonneg:
        s0.w = VectorXd::Ones(blk.dim);
        s0.lambda = VectorXd::Ones(blk.dim);
        break;
      case ConeKind::SecondOrder:
        s0.beta = 1.0;
        s0.v = unit_e(blk);
        s0.lambda = unit_e(blk);
        break;
      default:
        s0.R = MatrixXd::Identity(blk.matdim, blk.matdim);
        s0.Rinv = s0.R;
        s0.lambda = VectorXd::Ones(blk.matdim);
        break;
    }
  }
  kkt.factor(sc);
  if (!kkt.ok) return finish(sol);

  VectorXd x(n), y(p), z(N), s(N), du1, du2, du3;
  {
    VectorXd zs;
    if (!kkt.solve_k3(VectorXd::Zero(n), b, h, x, du2, zs)) return finish(sol);
    s = -zs;
    double shift = 0.0;
    for (const auto& blk : C.cones)
      shift = std::max(shift, -cone_min_eig(blk, s.segment(blk.offset, blk.dim)));
    if (shift >= -1e-8 * std::max(1.0, s.norm()))
      for (const auto& blk : C.cones)
        s.segment(blk.offset, blk.dim) += (1.0 + shift) * unit_e(blk);

    if (!kkt.solve_k3(-c, VectorXd::Zero(p), VectorXd::Zero(N), du1, y, z)) return finish(sol);
    shift = 0.0;
    for (const auto& blk : C.cones)
      shift = std::max(shift, -cone_min_eig(blk, z.segment(blk.offset, blk.dim)));
    if (shift >= -1e-8 * std::max(1.0, z.norm()))
      for (const auto& blk : C.cones)
        z.segment(blk.offset, blk.dim) += (1.0 + shift) * unit_e(blk);
  }
  double tau = 1.0, kappa = 1.0;

  const double bnorm = std::max(1.0, b.norm());
  const double hnorm = std::max(1.0, h.norm());
  const double cnorm = std::max(1.0, c.norm());

  VectorXd dx(n), dy(p), dz(N), ds(N);
  VectorXd corr = VectorXd::Zero(N);
  double corr_tk = 0.0;

  // Iterates can drift once the KKT system turns singular near a degenerate
  // optimum, so trouble exits hand back the best point seen instead of the
  // last one.
  double best_merit = std::numeric_limits<double>::infinity();
  VectorXd best_x = VectorXd::Zero(n);
  double best_obj = 0.0, best_pres = 0.0, best_dres = 0.0, best_gap = 0.0;
  auto load_best = [&](ConicSolution& out) -> ConicSolution& {
    out.status = SolveStatus::NumericalTrouble;
    out.x = best_x;
    out.objective = best_obj;
    out.primal_residual = best_pres;
    out.dual_residual = best_dres;
    out.duality_gap = best_gap;
    return out;
  };

  for (int iter = 0;; ++iter) {
    VectorXd Gx = cone_matvec(C, x);
    VectorXd Gtz = cone_tmatvec(C, z);
    VectorXd rx = Gtz + c * tau;
    if (p > 0) rx += C.Aeq.transpose() * y;
    VectorXd ry = p > 0 ? VectorXd(C.Aeq * x - b * tau) : VectorXd(0);
    VectorXd rz = Gx + s - h * tau;
    double by = p > 0 ? b.dot(y) : 0.0;
    double hz = h.dot(z);
    double cx = c.dot(x);
    double rt = kappa + cx + by + hz;

    double pres = std::max(p > 0 ? ry.norm() / bnorm : 0.0, rz.norm() / hnorm) / tau;
    double dres = rx.norm() / cnorm / tau;
    double gap = s.dot(z);
    double pcost = cx / tau;
    double absgap = gap / (tau * tau);
    double relgap = absgap / std::max(1.0, std::abs(pcost));

    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.duality_gap = absgap;
    sol.iterations = iter;

    double merit = std::max({pres, dres, std::min(absgap, relgap)});
    if (merit < best_merit) {
      best_merit = merit;
      best_x = x / tau;
      best_obj = pcost;
      best_pres = pres;
      best_dres = dres;
      best_gap = absgap;
    }

    if (tol.verbose)
      std::cerr << "iter " << iter << " pcost " << pcost << " gap " << absgap << " pres " << pres
                << " dres " << dres << " tau " << tau << " kappa " << kappa << "\n";

    if (pres <= tol.feas_tol && dres <= tol.feas_tol &&
        (absgap <= tol.gap_tol || relgap <= tol.gap_tol)) {
      sol.status = SolveStatus::Optimal;
      sol.x = x / tau;
      sol.objective = pcost;
      return finish(sol);
    }
    double hzby = by + hz;
    if (hzby < 0.0 && (rx - c * tau).norm() / cnorm <= tol.feas_tol * (-hzby)) {
      sol.status = SolveStatus::Infeasible;
      sol.x = VectorXd::Zero(n);
      return finish(sol);
    }
    if (cx < 0.0) {
      double dinf = std::max(p > 0 ? (ry + b * tau).norm() / bnorm : 0.0, (rz + h * tau).norm() / hnorm);
      if (dinf <= tol.feas_tol * (-cx)) {
        sol.status = SolveStatus::Unbounded;
        sol.x = VectorXd::Zero(n);
        return finish(sol);
      }
    }
    if (iter >= tol.max_iters) {
      return finish(load_best(sol));
    }

    bool scale_ok = true;
    for (size_t k = 0; k < C.cones.size(); ++k) {
      const auto& blk = C.cones[k];
      if (!compute_scaling(blk, s.segment(blk.offset, blk.dim), z.segment(blk.offset, blk.dim), sc[k]))
        scale_ok = false;
    }
    if (!scale_ok) {
      return finish(load_best(sol));
    }
    kkt.factor(sc);
    if (!kkt.ok) {
      return finish(load_best(sol));
    }

    double gap_total = gap + tau * kappa;
    double mu = gap_total / (C.nu + 1);

    VectorXd wx, wy, wz;
    if (!kkt.solve_k3(-c, b, h, wx, wy, wz)) {
      return finish(load_best(sol));
    }
    double denom = c.dot(wx) + (p > 0 ? b.dot(wy) : 0.0) + h.dot(wz) - kappa / tau;
    if (!std::isfinite(denom) || std::abs(denom) < 1e-300) {
      return finish(load_best(sol));
    }

    double sigma = 0.0, step = 0.0, dtau = 0.0, dkappa = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      VectorXd d_s(N);
      for (size_t k = 0; k < C.cones.size(); ++k) {
        const auto& blk = C.cones[k];
        VectorXd v = -lambda_sq(blk, sc[k]);
        if (pass == 1) v += -corr.segment(blk.offset, blk.dim) + sigma * mu * unit_e(blk);
        d_s.segment(blk.offset, blk.dim) = v;
      }
      double d_tk = -tau * kappa + (pass == 1 ? -corr_tk + sigma * mu : 0.0);

      // Affine pass aims at zero residuals; the combined pass only asks for
      // the (1 - sigma) fraction so residuals and complementarity shrink at
      // the same rate, which keeps the embedding on its feasible ray.
      double eta = (pass == 0) ? 1.0 : 1.0 - sigma;
      VectorXd dsl(N), bz(N);
      for (size_t k = 0; k < C.cones.size(); ++k) {
        const auto& blk = C.cones[k];
        dsl.segment(blk.offset, blk.dim) = jordan_div(blk, sc[k], d_s.segment(blk.offset, blk.dim));
        bz.segment(blk.offset, blk.dim) =
            -eta * rz.segment(blk.offset, blk.dim) -
            WT_apply(blk, sc[k], dsl.segment(blk.offset, blk.dim));
      }
      VectorXd vx, vy, vz;
      if (!kkt.solve_k3(-eta * rx, p > 0 ? VectorXd(-eta * ry) : VectorXd(0), bz, vx, vy, vz)) {
        return finish(load_best(sol));
      }
      double f4 = -eta * rt;
      dtau = (f4 - d_tk / tau - (c.dot(vx) + (p > 0 ? b.dot(vy) : 0.0) + h.dot(vz))) / denom;
      dx = vx + dtau * wx;
      if (p > 0) dy = vy + dtau * wy;
      dz = vz + dtau * wz;
      for (size_t k = 0; k < C.cones.size(); ++k) {
        const auto& blk = C.cones[k];
        ds.segment(blk.offset, blk.dim) =
            WT_apply(blk, sc[k],
                     dsl.segment(blk.offset, blk.dim) -
                         W_apply(blk, sc[k], dz.segment(blk.offset, blk.dim)));
      }
      dkappa = (d_tk - kappa * dtau) / tau;

      double t = std::max({0.0, -dtau / tau, -dkappa / kappa});
      for (size_t k = 0; k < C.cones.size(); ++k) {
        const auto& blk = C.cones[k];
        VectorXd dsw = WinvT_apply(blk, sc[k], ds.segment(blk.offset, blk.dim));
        VectorXd dzw = W_apply(blk, sc[k], dz.segment(blk.offset, blk.dim));
        t = std::max({t, max_step_scaled(blk, sc[k], dsw), max_step_scaled(blk, sc[k], dzw)});
        if (pass == 0) {
          corr.segment(blk.offset, blk.dim) = jordan_prod(blk, dsw, dzw);
        }
      }
      if (pass == 0) {
        double dsdz = ds.dot(dz) + dtau * dkappa;
        corr_tk = dtau * dkappa;
        step = (t == 0.0) ? 1.0 : std::min(1.0, 1.0 / t);
        sigma = std::pow(std::min(1.0, std::max(0.0, 1.0 - step + dsdz / gap_total * step * step)), 3.0);
      } else {
        step = (t == 0.0) ? 1.0 : std::min(1.0, kStepFactor / t);
      }
    }

    if (!(step > 1e-10)) {
      return finish(load_best(sol));
    }
    x += step * dx;
    if (p > 0) y += step * dy;
    z += step * dz;
    s += step * ds;
    tau += step * dtau;
    kappa += step * dkappa;
    if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite()) return finish(load_best(sol));
  }
}

}  // namespace admpc
