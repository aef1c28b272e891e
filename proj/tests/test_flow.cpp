#include <catch2/catch_amalgamated.hpp>

#include "nsflow/apps.hpp"
#include "nsflow/flow.hpp"
#include "nsflow/oracle.hpp"

#include <cmath>

using namespace nsflow;

namespace {

// x' = A x with diagonal A and one surface h = x_1 - 100 that is never reached.
PiecewiseField diagonal_linear_field(const Vector& diag) {
  const int d = static_cast<int>(diag.size());
  PiecewiseField field;
  field.dim = d;
  field.num_surfaces = 1;
  field.h = [](const Vector& x) { return Vector::Constant(1, x[0] - 100.0); };
  field.dh = [d](const Vector&) { return Matrix(Vector::Unit(d, 0).transpose()); };
  field.selection = [diag](const SignVector&, const Vector& x) { return Vector(diag.cwiseProduct(x)); };
  field.selection_jacobian = [diag](const SignVector&, const Vector&) { return Matrix(diag.asDiagonal()); };
  field.h_ref = Vector::Zero(1);
  return field;
}

// Position/velocity pair pushed back towards p = 0 from either side.
PiecewiseField bang_bang_field() {
  PiecewiseField field;
  field.dim = 2;
  field.num_surfaces = 1;
  field.h = [](const Vector& x) { return Vector::Constant(1, x[0]); };
  field.dh = [](const Vector&) { return Matrix(Vector::Unit(2, 0).transpose()); };
  field.selection = [](const SignVector& b, const Vector& x) { return Vector((Vector(2) << x[1], -50.0 * b[0]).finished()); };
  field.selection_jacobian = [](const SignVector&, const Vector&) {
    Matrix j = Matrix::Zero(2, 2);
    j(0, 1) = 1.0;
    return j;
  };
  field.h_ref = Vector::Zero(1);
  return field;
}

}  // namespace

TEST_CASE("smooth linear flow matches the exponential", "[flow]") {
  const Vector diag = (Vector(3) << -1.0, 0.5, 2.0).finished();
  const PiecewiseField field = diagonal_linear_field(diag);
  const Vector x0 = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Trajectory traj = integrate(field, x0, 1.0);
  const Vector expected = (diag.array().exp() * x0.array()).matrix();
  CHECK(traj.events.empty());
  CHECK((traj.endpoint() - expected).norm() <= 1e-12);
  CHECK(traj.segments.front().times.size() == 4097);
  const Matrix fundamental = variational(field, traj.segments.front());
  CHECK((fundamental - Matrix(diag.array().exp().matrix().asDiagonal())).norm() <= 1e-12);
}

TEST_CASE("zero horizon gives a single sample", "[flow]") {
  const PwcSystem sys = pwc_model(pwc_linear(2, 0.5));
  const Trajectory traj = integrate(sys.field, sys.corner.rho_minus(), 0.0);
  REQUIRE(traj.segments.size() == 1);
  CHECK(traj.segments.front().states.size() == 1);
  CHECK(traj.endpoint() == sys.corner.rho_minus());
  CHECK_THROWS_AS(integrate(sys.field, sys.corner.rho_minus(), -1.0), Error);
}

TEST_CASE("pwc flow passes through the corner from rho^- to rho^+", "[flow][pwc]") {
  for (int d = 2; d <= 4; ++d) {
    const PwcSystem sys = pwc_model(pwc_random(d, 70 + d));
    const Trajectory traj = integrate(sys.field, sys.corner.rho_minus(), 1.0);
    REQUIRE(traj.events.size() == 1);
    const EventRecord& e = traj.events.front();
    CHECK(e.is_corner());
    CHECK(static_cast<int>(e.surfaces.size()) == d);
    CHECK(e.time == Catch::Approx(0.5).margin(1e-12));
    CHECK(e.before.all_minus());
    CHECK(e.after.all_plus());
    CHECK((traj.endpoint() - sys.corner.rho_plus()).norm() <= 1e-12);
  }
}

TEST_CASE("corner model of an event reproduces the declared corner", "[flow][pwc]") {
  const PwcSystem sys = pwc_model(pwc_random(3, 81));
  const Trajectory traj = integrate(sys.field, sys.corner.rho_minus(), 1.0);
  REQUIRE(traj.events.size() == 1);
  const CornerModel m = corner_for_event(sys.field, traj.events.front());
  CHECK(m.eta().isApprox(sys.corner.eta()));
  for (std::uint64_t i = 0; i < 8; ++i) {
    const SignVector b = SignVector::from_lex_index(3, i);
    CHECK(m.gamma(b).isApprox(sys.corner.gamma(b)));
  }
}

TEST_CASE("separate crossings chain saltations exactly for pwc fields", "[flow][pwc]") {
  const PwcSystem sys = pwc_model(pwc_random(2, 91));
  const Vector x0 = sys.corner.rho_minus() + (Vector(2) << 0.1, -0.05).finished();
  const Trajectory traj = integrate(sys.field, x0, 1.0);
  REQUIRE(traj.events.size() == 2);
  CHECK_FALSE(traj.events[0].is_corner());
  CHECK(traj.events[0].surfaces.front() == 0);
  CHECK(traj.events[1].surfaces.front() == 1);

  std::mt19937_64 rng(91);
  for (int k = 0; k < 10; ++k) {
    const Vector dx = random_direction(2, rng);
    const double alpha = 1e-6;
    const Vector fd = (integrate(sys.field, x0 + alpha * dx, 1.0).endpoint() - traj.endpoint()) / alpha;
    CHECK((chained_bderivative(sys.field, traj, dx) - fd).norm() <= 1e-6);
  }
}

TEST_CASE("single-event derivative against forward differences", "[flow]") {
  // One curved surface, affine selections.
  PiecewiseField field;
  field.dim = 2;
  field.num_surfaces = 1;
  field.h = [](const Vector& x) { return Vector::Constant(1, x[0] + 0.3 * x[1] * x[1]); };
  field.dh = [](const Vector& x) { return Matrix((Eigen::RowVector2d() << 1.0, 0.6 * x[1]).finished()); };
  field.selection = [](const SignVector& b, const Vector& x) {
    return b[0] < 0 ? Vector((Vector(2) << 1.0 + 0.2 * x[1], 0.5 - 0.1 * x[0]).finished())
                    : Vector((Vector(2) << 2.0 - 0.3 * x[0], -0.4 + 0.2 * x[1]).finished());
  };
  field.selection_jacobian = [](const SignVector& b, const Vector&) {
    return b[0] < 0 ? Matrix((Eigen::Matrix2d() << 0.0, 0.2, -0.1, 0.0).finished())
                    : Matrix((Eigen::Matrix2d() << -0.3, 0.0, 0.0, 0.2).finished());
  };
  field.h_ref = Vector::Zero(1);

  const Vector x0 = (Vector(2) << -0.6, 0.2).finished();
  const Matrix deriv = derivative_through_single_event(field, x0, 1.0);
  for (int i = 0; i < 2; ++i) {
    const Vector dx = Vector::Unit(2, i);
    const auto q = finite_difference_flow(field, x0, 1.0, dx, {1e-4, 1e-5});
    const double e4 = (q[0] - deriv * dx).norm();
    const double e5 = (q[1] - deriv * dx).norm();
    CHECK(e5 <= 1e-4);
    CHECK(e5 < e4);
  }
}

TEST_CASE("corner derivative on random curved fields (seed 97)", "[flow][corner]") {
  const RandomCornerField rf = random_corner_field(2, 3, 97);
  const Trajectory traj = integrate(rf.field, rf.x0, rf.horizon);
  REQUIRE(traj.events.size() == 1);
  CHECK(traj.events.front().is_corner());
  CHECK(traj.events.front().time == Catch::Approx(rf.corner_time).margin(1e-8));
  CHECK((traj.events.front().state - rf.rho).norm() <= 1e-8);

  const FlowDerivative fd = corner_flow_derivative(rf.field, rf.x0, rf.horizon);
  std::mt19937_64 rng(97);
  for (int k = 0; k < 10; ++k) {
    const Vector dx = random_direction(3, rng);
    const Vector predicted = corner_flow_bderivative(fd, dx);
    CHECK((chained_bderivative(rf.field, traj, dx) - predicted).norm() <= 1e-12);

    // The perturbed trajectory crosses the surfaces in the predicted order.
    const Trajectory perturbed = integrate(rf.field, rf.x0 + 1e-3 * dx, rf.horizon);
    REQUIRE(perturbed.events.size() == 2);
    const Permutation sigma = transition_sequence(fd, dx);
    CHECK(perturbed.events[0].surfaces.front() == sigma[0]);
    CHECK(perturbed.events[1].surfaces.front() == sigma[1]);

    const auto q = finite_difference_flow(rf.field, rf.x0, rf.horizon, dx, {1e-3, 1e-4});
    CHECK((q[1] - predicted).norm() < (q[0] - predicted).norm());
  }
}

TEST_CASE("sliding crossings are rejected", "[flow][errors]") {
  PiecewiseField field;
  field.dim = 1;
  field.num_surfaces = 1;
  field.h = [](const Vector& x) { return x; };
  field.dh = [](const Vector&) { return Matrix::Identity(1, 1); };
  field.selection = [](const SignVector& b, const Vector&) { return Vector::Constant(1, -b[0]); };
  field.selection_jacobian = [](const SignVector&, const Vector&) { return Matrix::Zero(1, 1); };
  field.h_ref = Vector::Zero(1);
  try {
    integrate(field, Vector::Constant(1, -0.5), 1.0);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TangentialCrossing);
  }
}

TEST_CASE("double crossing within one step is reported", "[flow][errors]") {
  const PiecewiseField field = bang_bang_field();
  IntegrateOptions opts;
  opts.steps = 1;
  try {
    integrate(field, (Vector(2) << -0.1, 1.0).finished(), 1.0, opts);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StepTooLarge);
  }
  // Fine steps resolve the oscillation.
  const Trajectory traj = integrate(field, (Vector(2) << -0.1, 1.0).finished(), 1.0);
  CHECK(traj.events.size() > 2);
}

TEST_CASE("event localization lands on the surface", "[flow]") {
  const PiecewiseField field = bang_bang_field();
  const Trajectory traj = integrate(field, (Vector(2) << -0.1, 1.0).finished(), 0.5);
  REQUIRE_FALSE(traj.events.empty());
  for (const EventRecord& e : traj.events) {
    CHECK(std::abs(e.state[0]) <= 1e-10);
    CHECK(e.directions.size() == 1);
  }
  // p'' = 50 for p < 0: first crossing solves -0.1 + t + 25 t^2 = 0.
  const double t1 = (-1.0 + std::sqrt(1.0 + 10.0)) / 50.0;
  CHECK(traj.events.front().time == Catch::Approx(t1).epsilon(1e-9));
  CHECK(traj.events.front().directions.front() == 1);
  CHECK(traj.events[1].directions.front() == -1);
}
