#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>

#include "admpc/lmi.hpp"
#include "admpc/model.hpp"
#include "admpc/mpc.hpp"
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

// Everything downstream of the synthesis, built once and shared: the solves
// are deterministic and the fixtures are read-only.
struct Fixture {
  LtiSystem sys;
  ValidatedSystem vs;
  CoupledSystem cs;
  CentralizedTerminal ct;
  DistributedTerminalDesign design;
  double alpha_star;
  PolyhedralSet oinf;
  AdaptiveLevels fixed;

  Fixture()
      : sys(illustrative()),
        vs(validate_system(sys)),
        cs([this] {
          Partition part;
          part.states = {{0}, {1}};
          part.inputs = {{0}, {1}};
          part.neighbors = {{0, 1}, {0, 1}};
          return decompose(vs, part);
        }()),
        ct(solve_theorem1(vs)),
        design(build_design_phase(cs)),
        alpha_star(max_ellipsoid(ct, sys)),
        oinf([this] {
          MatrixXd C(8, 2);
          C << sys.G, sys.H * ct.K_c;
          VectorXd c(8);
          c << sys.g, sys.h;
          return gilbert_tan(sys.A + sys.B * ct.K_c, C, c);
        }()),
        fixed(fixed_levels_design(cs, design)) {}
};

const Fixture& fix() {
  static Fixture f;
  return f;
}

double dynamics_residual(const LtiSystem& s, const MpcSolution& sol) {
  double worst = 0.0;
  for (int t = 0; t + 1 <= sol.x.cols() - 1; ++t)
    worst = std::max(worst, (sol.x.col(t + 1) - s.A * sol.x.col(t) - s.B * sol.u.col(t))
                                .lpNorm<Eigen::Infinity>());
  return worst;
}

double path_violation(const LtiSystem& s, const MpcSolution& sol) {
  double worst = -1e300;
  for (int t = 1; t + 1 <= sol.x.cols() - 1; ++t)
    worst = std::max(worst, (s.G * sol.x.col(t) - s.g).maxCoeff());
  for (int t = 0; t < sol.u.cols(); ++t)
    worst = std::max(worst, (s.H * sol.u.col(t) - s.h).maxCoeff());
  return worst;
}

}  // namespace

TEST_CASE("all variants solve an interior start with consistent accounting") {
  const Fixture& f = fix();
  const int T = 2;
  MpcFormulation forms[] = {make_cmax(f.cs, f.ct, f.oinf, T),
                            make_cellip(f.cs, f.ct, f.alpha_star, T),
                            make_dfixed(f.cs, f.design, f.fixed, T),
                            make_dadaptive(f.cs, f.design, T)};
  VectorXd x0(2);
  x0 << 0.05, 0.5;

  double j_cmax = 0.0, j_cellip = 0.0;
  for (const auto& form : forms) {
    CAPTURE(to_string(form.variant));
    MpcSolution sol = solve_mpc(form, x0);
    REQUIRE(sol.feasible);
    CHECK(sol.x.cols() == T + 1);
    CHECK(sol.u.cols() == T);
    CHECK((sol.x.col(0) - x0).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(dynamics_residual(f.sys, sol) < 1e-7);
    CHECK(path_violation(f.sys, sol) < 1e-7);
    CHECK(tail_violation(form, sol) < 1e-7);
    double rec = recompute_objective(form, sol.x, sol.u);
    CHECK(std::fabs(sol.objective - rec) < 1e-6 * (1.0 + std::fabs(rec)));
    if (form.variant == MpcVariant::CMax) j_cmax = sol.objective;
    if (form.variant == MpcVariant::CEllip) j_cellip = sol.objective;
    if (form.variant == MpcVariant::DAdaptive) {
      REQUIRE(sol.alpha.size() == 2);
      CHECK(sol.alpha.minCoeff() > 0.0);
      REQUIRE(sol.levels.beta.size() == 2);
      CHECK((sol.alpha - sol.levels.beta.cwiseProduct(sol.levels.beta)).lpNorm<Eigen::Infinity>() <
            1e-12);
    }
  }
  // This close to the origin both centralized terminal sets are inactive, so
  // the costs coincide; every decoupled variant can only do worse than C_Max.
  CHECK(j_cmax == doctest::Approx(j_cellip).epsilon(1e-6));
}

TEST_CASE("inside the maximal invariant set the mpc cost is the lqr value") {
  const Fixture& f = fix();
  VectorXd x0(2);
  x0 << 0.05, 0.2;
  REQUIRE(contains(f.oinf, x0));
  REQUIRE(x0.dot(f.ct.P_c * x0) <= f.alpha_star);

  // The terminal value extends the stage sum to an infinite-horizon cost, so
  // any horizon returns x0' P_c x0 while the unconstrained law stays valid.
  for (int T : {1, 3}) {
    MpcSolution smax = solve_mpc(make_cmax(f.cs, f.ct, f.oinf, T), x0);
    MpcSolution sell = solve_mpc(make_cellip(f.cs, f.ct, f.alpha_star, T), x0);
    REQUIRE(smax.feasible);
    REQUIRE(sell.feasible);
    double v = x0.dot(f.ct.P_c * x0);
    CHECK(smax.objective == doctest::Approx(v).epsilon(1e-4));
    CHECK(sell.objective == doctest::Approx(v).epsilon(1e-4));
  }
}

TEST_CASE("adaptive levels reach states the fixed centralized ellipsoid cannot") {
  const Fixture& f = fix();
  const int T = 2;
  MpcFormulation fell = make_cellip(f.cs, f.ct, f.alpha_star, T);
  MpcFormulation fada = make_dadaptive(f.cs, f.design, T);

  for (double x2 : {3.0, -3.0}) {
    VectorXd x0(2);
    x0 << 0.0, x2;
    MpcSolution sell = solve_mpc(fell, x0);
    MpcSolution sada = solve_mpc(fada, x0);
    CHECK_FALSE(sell.feasible);
    REQUIRE(sada.feasible);
    // The stretch is paid for where it is needed: the second level grows.
    CHECK(sada.alpha[1] > sada.alpha[0]);
    CHECK(tail_violation(fada, sada) < 1e-7);
  }

  // A start the adaptive variant cannot serve is out of reach for the fixed
  // ellipsoid too: the adaptation only ever enlarges the feasible region.
  VectorXd corner(2);
  corner << 5.0, 5.0;
  CHECK_FALSE(solve_mpc(fada, corner).feasible);
  CHECK_FALSE(solve_mpc(fell, corner).feasible);
}

TEST_CASE("starts outside the state box report infeasible cleanly") {
  const Fixture& f = fix();
  VectorXd x0(2);
  x0 << 6.0, 0.0;
  for (const auto& form : {make_cellip(f.cs, f.ct, f.alpha_star, 2),
                           make_dadaptive(f.cs, f.design, 2)}) {
    MpcSolution sol = solve_mpc(form, x0);
    CHECK_FALSE(sol.feasible);
    CHECK(sol.status == SolveStatus::Infeasible);
  }
}

TEST_CASE("receding horizon decreases the optimal cost and converges") {
  const Fixture& f = fix();
  MpcFormulation fada = make_dadaptive(f.cs, f.design, 2);
  VectorXd x0(2);
  x0 << 0.0, 4.5;
  RhTrace tr = receding_horizon(f.sys, fada, x0);

  REQUIRE(tr.steps.size() > 1);
  CHECK(tr.infeasible_at == -1);
  CHECK(tr.converged);
  CHECK(tr.final_state.lpNorm<Eigen::Infinity>() <= 1e-3);

  for (size_t k = 0; k + 1 < tr.steps.size(); ++k) {
    const RhStep& cur = tr.steps[k];
    CAPTURE(cur.t);
    CHECK(tr.steps[k + 1].j_star - cur.j_star <=
          -cur.stage_cost + 1e-6 * (1.0 + std::fabs(cur.j_star)));
  }
  for (const RhStep& st : tr.steps) CHECK(st.tail < 1e-7);

  // The per-step decrease telescopes: the executed cost never exceeds the
  // first optimal value.
  CHECK(closed_loop_cost(tr) <= tr.steps.front().j_star + 1e-6);
}

TEST_CASE("frozen levels replay the adaptive solution without losing feasibility") {
  const Fixture& f = fix();
  MpcFormulation fada = make_dadaptive(f.cs, f.design, 2);
  VectorXd x0(2);
  x0 << 0.0, 3.0;
  MpcSolution ada = solve_mpc(fada, x0);
  REQUIRE(ada.feasible);

  MpcFormulation frozen = fix_alpha(fada, ada);
  CHECK(frozen.variant == MpcVariant::DAd0);
  MpcSolution frz = solve_mpc(frozen, x0);
  REQUIRE(frz.feasible);
  // Freezing restricts the feasible set, so the cost cannot drop.
  CHECK(frz.objective >= ada.objective - 1e-6 * (1.0 + std::fabs(ada.objective)));
  CHECK((frz.levels.beta - ada.levels.beta).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(tail_violation(frozen, frz) < 1e-7);
}

TEST_CASE("fixed-design levels solve without adaptive variables") {
  const Fixture& f = fix();
  MpcFormulation ffix = make_dfixed(f.cs, f.design, f.fixed, 2);
  VectorXd x0(2);
  x0 << 0.0, 2.5;
  MpcSolution sol = solve_mpc(ffix, x0);
  REQUIRE(sol.feasible);
  CHECK(sol.levels.beta == f.fixed.beta);
  CHECK(tail_violation(ffix, sol) < 1e-7);
}

TEST_CASE("formulation validation rejects inconsistent inputs") {
  const Fixture& f = fix();
  VectorXd x0 = VectorXd::Zero(2);

  CHECK_THROWS_AS(solve_mpc(make_dadaptive(f.cs, f.design, 0), x0), Error);

  VectorXd bad_dim = VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_mpc(make_dadaptive(f.cs, f.design, 2), bad_dim), Error);

  DistributedTerminalDesign empty;
  CHECK_THROWS_AS(solve_mpc(make_dadaptive(f.cs, empty, 2), x0), Error);

  MpcFormulation noterm = make_cmax(f.cs, f.ct, f.oinf, 2);
  noterm.terminal_poly = PolyhedralSet{};
  CHECK_THROWS_AS(solve_mpc(noterm, x0), Error);
}

TEST_CASE("origin start converges immediately") {
  const Fixture& f = fix();
  MpcFormulation fada = make_dadaptive(f.cs, f.design, 2);
  RhTrace tr = receding_horizon(f.sys, fada, VectorXd::Zero(2));
  CHECK(tr.converged);
  CHECK(tr.steps.empty());
  CHECK(closed_loop_cost(tr) == 0.0);
}
