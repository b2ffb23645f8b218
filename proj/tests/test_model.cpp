#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "admpc/model.hpp"
#include "support/oracles.hpp"

using namespace admpc;

namespace {

// Two coupled scalar subsystems, each seeing the full state of the other.
LtiSystem two_state_system() {
  LtiSystem s;
  s.A.resize(2, 2);
  s.A << 5.0, 0.1, 0.3, 0.9;
  s.B = MatrixXd::Identity(2, 2);
  s.G.resize(4, 2);
  s.G << 1, 0, -1, 0, 0, 1, 0, -1;
  s.g = VectorXd::Constant(4, 5.0);
  s.H = s.G;
  s.h = VectorXd::Constant(4, 1.0);
  s.Q = MatrixXd::Identity(2, 2);
  s.R = 0.1 * MatrixXd::Identity(2, 2);
  return s;
}

Partition two_state_partition() {
  Partition p;
  p.states = {{0}, {1}};
  p.inputs = {{0}, {1}};
  p.neighbors = {{0, 1}, {0, 1}};
  return p;
}

ErrorKind thrown_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  REQUIRE(false);
  return ErrorKind::BuildError;
}

}  // namespace

TEST_CASE("validate_system accepts a well-posed plant") {
  auto v = validate_system(two_state_system());
  CHECK(v->n() == 2);
  CHECK(v->m() == 2);
}

TEST_CASE("validate_system rejects malformed data with the right kind") {
  auto base = two_state_system();

  auto bad_dim = base;
  bad_dim.B = MatrixXd::Identity(3, 2);
  CHECK(thrown_kind([&] { validate_system(bad_dim); }) == ErrorKind::DimensionMismatch);

  auto nan = base;
  nan.A(0, 0) = std::nan("");
  CHECK(thrown_kind([&] { validate_system(nan); }) == ErrorKind::DimensionMismatch);

  auto uncontrollable = base;
  uncontrollable.B = MatrixXd::Zero(2, 2);
  CHECK(thrown_kind([&] { validate_system(uncontrollable); }) == ErrorKind::NotControllable);

  auto empty_interior = base;
  empty_interior.g[0] = 0.0;
  CHECK(thrown_kind([&] { validate_system(empty_interior); }) == ErrorKind::OriginNotInterior);

  auto indefinite_q = base;
  indefinite_q.Q(0, 0) = -1.0;
  CHECK(thrown_kind([&] { validate_system(indefinite_q); }) == ErrorKind::CostNotPD);

  auto singular_r = base;
  singular_r.R.setZero();
  CHECK(thrown_kind([&] { validate_system(singular_r); }) == ErrorKind::CostNotPD);

  auto asym_q = base;
  asym_q.Q(0, 1) = 0.5;
  CHECK(thrown_kind([&] { validate_system(asym_q); }) == ErrorKind::CostNotPD);
}

TEST_CASE("decompose produces consistent local views") {
  auto sys = two_state_system();
  auto cs = decompose(validate_system(sys), two_state_partition());

  REQUIRE(cs.M() == 2);
  const auto& v0 = cs.views[0];
  const auto& v1 = cs.views[1];

  CHECK(v0.n_i == 1);
  CHECK(v0.n_Ni == 2);
  CHECK(v0.m_i == 1);
  CHECK(v0.neighbor_ids == std::vector<int>{0, 1});

  // Row of A restricted to the neighborhood reproduces the global row.
  CHECK(v0.A_Ni(0, 0) == doctest::Approx(5.0));
  CHECK(v0.A_Ni(0, 1) == doctest::Approx(0.1));
  CHECK(v1.A_Ni(0, 0) == doctest::Approx(0.3));
  CHECK(v1.A_Ni(0, 1) == doctest::Approx(0.9));

  // Selection matrices satisfy U_i A W_i' = A_Ni and U_i B V_i' = B_i.
  for (int i = 0; i < 2; ++i) {
    const auto& v = cs.views[i];
    CHECK((cs.U[i] * sys.A * cs.W[i].transpose() - v.A_Ni).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((cs.U[i] * sys.B * cs.V[i].transpose() - v.B_i).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }

  // The half-split cost blocks recompose to the global cost on any vector.
  Eigen::VectorXd x(2), u(2);
  x << 0.7, -1.3;
  u << 0.2, 0.4;
  double local = 0.0;
  for (const auto& v : cs.views) local += stage_cost(v, v.restrict_state(x), v.restrict_input(u));
  CHECK(local == doctest::Approx(global_stage_cost(sys, x, u)).epsilon(1e-12));
}

TEST_CASE("decompose enforces partition and closure rules") {
  auto sys = two_state_system();

  auto missing_state = two_state_partition();
  missing_state.states = {{0}, {}};
  CHECK(thrown_kind([&] { decompose(validate_system(sys), missing_state); }) == ErrorKind::BuildError);

  auto duplicate = two_state_partition();
  duplicate.states = {{0, 1}, {1}};
  CHECK(thrown_kind([&] { decompose(validate_system(sys), duplicate); }) == ErrorKind::BuildError);

  auto not_self = two_state_partition();
  not_self.neighbors = {{1}, {0, 1}};
  CHECK(thrown_kind([&] { decompose(validate_system(sys), not_self); }) == ErrorKind::BuildError);

  // Dropping the coupling from the neighbor sets must be caught, because
  // A(0,1) and A(1,0) are nonzero.
  auto decoupled = two_state_partition();
  decoupled.neighbors = {{0}, {1}};
  CHECK(thrown_kind([&] { decompose(validate_system(sys), decoupled); }) ==
        ErrorKind::CouplingClosureViolated);

  // An input matrix that mixes inputs across subsystems is not block diagonal.
  auto mixing = sys;
  mixing.B << 1.0, 0.5, 0.0, 1.0;
  CHECK(thrown_kind([&] { decompose(validate_system(mixing), two_state_partition()); }) ==
        ErrorKind::CouplingClosureViolated);

  // Cross terms in Q are rejected: between non-neighbors outright, and
  // between neighbors because diagonal mass stays with the owner (the local
  // cost of x_Ni = e_own must equal q_own + input cost), which makes the
  // induced block indefinite. The dynamics here are diagonal so only the
  // cost rules can fire.
  auto crossed = sys;
  crossed.A << 5.0, 0.0, 0.0, 0.9;
  crossed.Q << 1.0, 0.4, 0.4, 1.0;
  CHECK(thrown_kind([&] { decompose(validate_system(crossed), two_state_partition()); }) ==
        ErrorKind::CostNotDecomposable);
  CHECK(thrown_kind([&] { decompose(validate_system(crossed), decoupled); }) ==
        ErrorKind::CostNotDecomposable);
}

TEST_CASE("three-subsystem chain keeps second neighbors out of the views") {
  LtiSystem s;
  s.A.resize(3, 3);
  s.A << 0.9, 0.1, 0.0, 0.1, 0.9, 0.1, 0.0, 0.1, 0.9;
  s.B = MatrixXd::Identity(3, 3);
  s.G.resize(6, 3);
  s.G << MatrixXd::Identity(3, 3), -MatrixXd::Identity(3, 3);
  s.g = VectorXd::Constant(6, 2.0);
  s.H = s.G;
  s.h = VectorXd::Constant(6, 1.0);
  s.Q = MatrixXd::Identity(3, 3);
  s.R = MatrixXd::Identity(3, 3);

  Partition p;
  p.states = {{0}, {1}, {2}};
  p.inputs = {{0}, {1}, {2}};
  p.neighbors = {{0, 1}, {0, 1, 2}, {1, 2}};

  auto cs = decompose(validate_system(s), p);
  CHECK(cs.views[0].n_Ni == 2);
  CHECK(cs.views[1].n_Ni == 3);
  CHECK(cs.views[2].n_Ni == 2);
  CHECK(cs.views[0].neighbor_pos(2) == -1);

  // Subsystem 1's neighborhood blocks sit at the right offsets.
  const auto& v1 = cs.views[1];
  int pos2 = v1.neighbor_pos(2);
  CHECK(v1.block_offset[pos2] == 2);
  CHECK(v1.block_size[pos2] == 1);
}

TEST_CASE("zoh_discretize matches the series oracle") {
  CtsLtiSystem cts;
  cts.A_c.resize(2, 2);
  cts.A_c << 0.0, 1.0, -2.0, -0.5;
  cts.B_c.resize(2, 1);
  cts.B_c << 0.0, 1.0;
  cts.G = MatrixXd::Identity(2, 2);
  cts.g = VectorXd::Constant(2, 1.0);
  cts.H = MatrixXd::Identity(1, 1);
  cts.h = VectorXd::Constant(1, 1.0);
  cts.Q = MatrixXd::Identity(2, 2);
  cts.R = MatrixXd::Identity(1, 1);

  auto d = zoh_discretize(cts, 0.1);
  MatrixXd A_ref, B_ref;
  oracle::zoh_series(cts.A_c, cts.B_c, 0.1, A_ref, B_ref);
  CHECK((d.A - A_ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d.B - B_ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d.Q.isApprox(cts.Q));
}

TEST_CASE("euler_discretize is exactly I + dt A and dt B") {
  CtsLtiSystem cts;
  cts.A_c.resize(2, 2);
  cts.A_c << 0.0, 1.0, -3.0, -0.7;
  cts.B_c.resize(2, 1);
  cts.B_c << 0.0, 2.0;
  cts.G = MatrixXd::Identity(2, 2);
  cts.g = VectorXd::Constant(2, 1.0);
  cts.H = MatrixXd::Identity(1, 1);
  cts.h = VectorXd::Constant(1, 1.0);
  cts.Q = MatrixXd::Identity(2, 2);
  cts.R = MatrixXd::Identity(1, 1);

  auto d = euler_discretize(cts, 0.25);
  MatrixXd expectA = MatrixXd::Identity(2, 2) + 0.25 * cts.A_c;
  CHECK((d.A - expectA).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d.B - 0.25 * cts.B_c).cwiseAbs().maxCoeff() == 0.0);
  // Euler keeps structural zeros that the exact exponential fills in.
  CHECK(d.A(0, 0) == 1.0);
}

TEST_CASE("stage_cost checks its dimensions") {
  auto cs = decompose(validate_system(two_state_system()), two_state_partition());
  VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(stage_cost(cs.views[0], wrong, VectorXd::Zero(1)), Error);
}
