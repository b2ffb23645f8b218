#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "admpc/lmi.hpp"
#include "admpc/model.hpp"
#include "admpc/terminal_sets.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace admpc;

namespace {

LtiSystem illustrative() {
  LtiSystem s;
  s.A = (MatrixXd(2, 2) << 5.0, 0.1, 0.3, 0.9).finished();
  s.B = MatrixXd::Identity(2, 2);
  s.G = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  s.g = VectorXd::Constant(4, 5.0);
  s.H = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  s.h = VectorXd::Constant(4, 1.0);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = 0.1 * MatrixXd::Identity(2, 2);
  return s;
}

CoupledSystem illustrative_coupled(const ValidatedSystem& vs) {
  Partition part;
  part.states = {{0}, {1}};
  part.inputs = {{0}, {1}};
  part.neighbors = {{0, 1}, {0, 1}};
  return decompose(vs, part);
}

// Walks a ray from the origin to the boundary of a polyhedral set.
VectorXd ray_boundary(const PolyhedralSet& set, const VectorXd& dir) {
  double lo = 0.0, hi = 1.0;
  while (contains(set, hi * dir) && hi < 1e9) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    (contains(set, mid * dir) ? lo : hi) = mid;
  }
  return lo * dir;
}

// max a'x over {F x <= b}; +inf when unbounded.
double support_max(const VectorXd& a, const MatrixXd& F, const VectorXd& b) {
  ConicProblem p;
  int x = p.add_vars(static_cast<int>(a.size()));
  for (int i = 0; i < a.size(); ++i) p.add_objective(x + i, -a[i]);
  p.begin_block(ConeKind::Nonneg, static_cast<int>(F.rows()));
  for (int r = 0; r < F.rows(); ++r) {
    p.add_constant(r, b[r]);
    for (int i = 0; i < F.cols(); ++i) p.add_coeff(r, x + i, -F(r, i));
  }
  p.end_block();
  ConicSolution sol = solve(p);
  if (sol.status == SolveStatus::Unbounded) return std::numeric_limits<double>::infinity();
  REQUIRE(sol.optimal());
  return -sol.objective;
}

}  // namespace

TEST_CASE("largest inscribed level of a box is the unit ball level") {
  LtiSystem s;
  s.A = MatrixXd::Zero(2, 2);
  s.B = MatrixXd::Identity(2, 2);
  s.G = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  s.g = VectorXd::Ones(4);
  s.H = MatrixXd::Zero(0, 2);
  s.h = VectorXd::Zero(0);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = MatrixXd::Identity(2, 2);
  CentralizedTerminal ct{MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2)};
  CHECK(max_ellipsoid(ct, s) == doctest::Approx(1.0));

  // Doubling every bound quadruples the level.
  s.g *= 2.0;
  CHECK(max_ellipsoid(ct, s) == doctest::Approx(4.0));

  // An all-zero gain makes the input rows vacuous rather than binding.
  s.H = (MatrixXd(2, 2) << 1, 0, -1, 0).finished();
  s.h = VectorXd::Constant(2, 0.01);
  CHECK(max_ellipsoid(ct, s) == doctest::Approx(4.0));
}

TEST_CASE("level set of the closed loop is invariant and tight") {
  LtiSystem s = illustrative();
  ValidatedSystem vs = validate_system(s);
  CentralizedTerminal ct = solve_theorem1(vs);
  double alpha = max_ellipsoid(ct, s);
  CHECK(alpha > 0.0);

  // Tightness: some constraint row touches the ellipsoid boundary.
  Eigen::LLT<MatrixXd> llt(ct.P_c);
  double closest = std::numeric_limits<double>::infinity();
  MatrixXd rows(8, 2);
  rows.topRows(4) = s.G;
  rows.bottomRows(4) = s.H * ct.K_c;
  VectorXd caps(8);
  caps << s.g, s.h;
  for (int r = 0; r < 8; ++r) {
    VectorXd a = rows.row(r).transpose();
    double support = std::sqrt(alpha * a.dot(llt.solve(a)));
    closest = std::min(closest, caps[r] - support);
  }
  CHECK(closest >= -1e-9);
  CHECK(closest <= 1e-9);

  // One closed-loop step from the boundary stays inside the level set.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(ct.P_c);
  MatrixXd half = es.operatorInverseSqrt();
  MatrixXd Acl = s.A + s.B * ct.K_c;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  double worst = -1e300;
  for (int k = 0; k < 1000; ++k) {
    VectorXd d(2);
    d << gauss(rng), gauss(rng);
    VectorXd x = std::sqrt(alpha) * (half * d.normalized());
    VectorXd xp = Acl * x;
    worst = std::max(worst, xp.dot(ct.P_c * xp) - alpha);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("contracting box is already maximal") {
  MatrixXd C = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  VectorXd c = VectorXd::Ones(4);

  PolyhedralSet half = gilbert_tan(0.5 * MatrixXd::Identity(2, 2), C, c);
  CHECK(half.A_f.rows() == 4);
  CHECK(contains(half, (VectorXd(2) << 1.0, 1.0).finished()));
  CHECK_FALSE(contains(half, (VectorXd(2) << 1.0001, 0.0).finished()));

  PolyhedralSet dead = gilbert_tan(MatrixXd::Zero(2, 2), C, c);
  CHECK(dead.A_f.rows() == 4);
  CHECK(contains(dead, (VectorXd(2) << -1.0, 1.0).finished()));
}

TEST_CASE("guards of the maximal-set construction") {
  MatrixXd C = (MatrixXd(4, 2) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  VectorXd c = VectorXd::Ones(4);

  CHECK_THROWS_AS(gilbert_tan(1.1 * MatrixXd::Identity(2, 2), C, c), Error);
  try {
    gilbert_tan(1.1 * MatrixXd::Identity(2, 2), C, c);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotStable);
  }

  VectorXd bad = c;
  bad[2] = 0.0;
  try {
    gilbert_tan(0.5 * MatrixXd::Identity(2, 2), C, bad);
    FAIL("expected rejection of a zero bound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OriginNotInterior);
  }

  // A strip is unbounded along the mixing direction of this map.
  MatrixXd strip = (MatrixXd(2, 2) << 1, 0, -1, 0).finished();
  MatrixXd mix = (MatrixXd(2, 2) << 0.5, 0.5, 0.0, 0.5).finished();
  try {
    gilbert_tan(mix, strip, VectorXd::Ones(2));
    FAIL("expected rejection of an unbounded constraint set");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BuildError);
  }

  // Dimension guard trips before any work happens.
  GilbertTanOptions opts;
  MatrixXd big = 0.5 * MatrixXd::Identity(13, 13);
  MatrixXd Cbig(26, 13);
  Cbig << MatrixXd::Identity(13, 13), -MatrixXd::Identity(13, 13);
  try {
    gilbert_tan(big, Cbig, VectorXd::Ones(26), opts);
    FAIL("expected the dimension guard");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BuildError);
  }

  // A rotation needs several powers; a cap of 1 cannot close the set.
  MatrixXd rot = (MatrixXd(2, 2) << 0.8, 0.5, -0.5, 0.8).finished();
  opts.power_cap = 1;
  try {
    gilbert_tan(rot, C, c, opts);
    FAIL("expected the iteration cap");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IterationCapExceeded);
  }
  opts.power_cap = 500;
  PolyhedralSet full = gilbert_tan(rot, C, c, opts);
  CHECK(full.A_f.rows() > 4);
}

TEST_CASE("maximal set of the coupled closed loop") {
  LtiSystem s = illustrative();
  ValidatedSystem vs = validate_system(s);
  CentralizedTerminal ct = solve_theorem1(vs);
  MatrixXd Acl = s.A + s.B * ct.K_c;
  MatrixXd C(8, 2);
  C << s.G, s.H * ct.K_c;
  VectorXd c(8);
  c << s.g, s.h;

  PolyhedralSet oinf = gilbert_tan(Acl, C, c);
  CHECK((oinf.b_f.array() > 0.0).all());
  CHECK(contains(oinf, VectorXd::Zero(2)));

  // The maximal ellipsoidal sublevel set sits inside the maximal polytope.
  double alpha = max_ellipsoid(ct, s);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(ct.P_c);
  MatrixXd half = es.operatorInverseSqrt();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  for (int k = 0; k < 1000; ++k) {
    VectorXd d(2);
    d << gauss(rng), gauss(rng);
    VectorXd x = std::sqrt(alpha) * (half * d.normalized());
    CAPTURE(k);
    REQUIRE(contains(oinf, x, 1e-9));
  }

  // Invariance of the polytope itself, checked on ray-boundary samples.
  const double pi = std::acos(-1.0);
  for (int k = 0; k < 200; ++k) {
    double ang = 2.0 * pi * k / 200.0;
    VectorXd x = ray_boundary(oinf, (VectorXd(2) << std::cos(ang), std::sin(ang)).finished());
    CAPTURE(k);
    REQUIRE(contains(oinf, Acl * x, 1e-9));
  }

  // No surviving row is implied by the others: with any one removed, the
  // others admit a point beyond its bound.
  for (int r = 0; r < oinf.A_f.rows(); ++r) {
    MatrixXd rest(oinf.A_f.rows() - 1, 2);
    VectorXd restb(oinf.b_f.size() - 1);
    int w = 0;
    for (int q = 0; q < oinf.A_f.rows(); ++q) {
      if (q == r) continue;
      rest.row(w) = oinf.A_f.row(q);
      restb[w] = oinf.b_f[q];
      ++w;
    }
    CAPTURE(r);
    CHECK(support_max(oinf.A_f.row(r).transpose(), rest, restb) > oinf.b_f[r] + 1e-9);
  }
}

TEST_CASE("membership helpers") {
  EllipsoidalSet ell{2.0 * MatrixXd::Identity(2, 2), 2.0};
  CHECK(contains(ell, VectorXd::Zero(2)));
  CHECK(contains(ell, (VectorXd(2) << 1.0, 0.0).finished()));   // boundary
  CHECK_FALSE(contains(ell, (VectorXd(2) << 1.01, 0.0).finished()));

  PolyhedralSet poly{(MatrixXd(1, 2) << 1.0, 0.0).finished(), VectorXd::Ones(1)};
  CHECK(contains(poly, VectorXd::Zero(2)));
  CHECK(contains(poly, (VectorXd(2) << 1.0, 5.0).finished()));
  CHECK_FALSE(contains(poly, (VectorXd(2) << 1.1, 0.0).finished()));
}

TEST_CASE("fixed levels are certified and sampled sound") {
  ValidatedSystem vs = validate_system(illustrative());
  CoupledSystem cs = illustrative_coupled(vs);
  DistributedTerminalDesign d = build_design_phase(cs);

  AdaptiveLevels levels = fixed_levels_design(cs, d);
  CHECK(levels.beta.sum() == doctest::Approx(7.912001).epsilon(1e-3));
  CHECK(levels.beta.minCoeff() > 0.01);

  ValidationReport rep = verify_invariance_sampled(cs, d, levels, 10000, 20240817);
  CHECK(rep.samples == 10000);
  CHECK(rep.invariance <= 1e-7);
  CHECK(rep.state <= 1e-7);
  CHECK(rep.input <= 1e-7);
  // The joint maximization lands on strongly unequal levels, where only the
  // 1/beta_i weighted decrease sum is certified (the plain sum needs equal
  // levels to inherit it).
  CHECK(rep.decrease_weighted <= 1e-6);

  // Deterministic per seed.
  ValidationReport again = verify_invariance_sampled(cs, d, levels, 10000, 20240817);
  CHECK(again.invariance == rep.invariance);
  CHECK(again.input == rep.input);

  // A corrupted gain must be flagged, not absorbed.
  AdaptiveLevels broken = levels;
  for (auto& K : broken.K) K *= 10.0;
  ValidationReport flag = verify_invariance_sampled(cs, d, broken, 2000, 3);
  CHECK(flag.input > 1e-3);
  CHECK(flag.invariance > 1e-3);
}

TEST_CASE("vanished levels confine sampling to the origin") {
  ValidatedSystem vs = validate_system(illustrative());
  CoupledSystem cs = illustrative_coupled(vs);
  DistributedTerminalDesign d = build_design_phase(cs);

  AdaptiveLevels levels;
  levels.beta = VectorXd::Zero(2);
  levels.Y = {MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 2)};
  levels.K = {d.K_ref[0], d.K_ref[1]};
  ValidationReport rep = verify_invariance_sampled(cs, d, levels, 500, 5);
  CHECK(rep.invariance == 0.0);
  CHECK(rep.state == doctest::Approx(-5.0));
  CHECK(rep.input == doctest::Approx(-1.0));
  CHECK(rep.decrease_sum == 0.0);
}
