#include "doctest.h"

#include <cmath>

#include "mulform/errors.hpp"
#include "mulform/flow.hpp"
#include "mulform/rng.hpp"

using namespace mulform;

namespace {

const VariableSet kV4 = VariableSet({"x1", "x2", "y1", "y2"});

VectorFieldEvaluator field(const VariableSet& vars, std::vector<const char*> src, const char* rate = "0") {
  std::vector<Expr> comps;
  for (const char* s : src) comps.push_back(parse(s, vars));
  return VectorFieldEvaluator(comps, parse(rate, vars));
}

// so(3)* spray on R^6: ẋ^m = Σ_i π^{im}(x) p_i with π^{ij} = ε_{ijk} x_k.
VectorFieldEvaluator so3_spray() {
  const VariableSet v = VariableSet::chart(3, 3);
  return field(v, {"x3*y2 - x2*y3", "x1*y3 - x3*y1", "x2*y1 - x1*y2", "0", "0", "0"});
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("zero field") {
  const auto V = field(kV4, {"0", "0", "0", "0"});
  const Vec a = vec({0.1, 0.2, 0.3, 0.4});
  CHECK((flow(V, a, 0.7) - a).norm() == 0.0);
  const Trajectory tr = flow_with_jacobian(V, a, {0.0, 0.5, 1.0});
  for (const Mat& J : tr.J) CHECK((J - Mat::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("affine field of a constant bivector") {
  // π = ∂1∧∂2: ẋ1 = -p2, ẋ2 = p1.
  const auto V = field(kV4, {"-y2", "y1", "0", "0"});
  const Vec a = vec({0.1, -0.3, 0.7, 0.2});
  const Vec b = flow(V, a, 0.8);
  CHECK(std::abs(b[0] - (0.1 - 0.8 * 0.2)) < 1e-12);
  CHECK(std::abs(b[1] - (-0.3 + 0.8 * 0.7)) < 1e-12);
  const Trajectory tr = flow_with_jacobian(V, a, {0.0, 0.25, 1.0}, TrajectoryOptions{8, {}});
  Mat expect = Mat::Identity(4, 4);
  expect(0, 3) = -1.0;
  expect(1, 2) = 1.0;
  CHECK((tr.J[2] - expect).norm() < 1e-12);
  CHECK((tr.J[1] - (Mat::Identity(4, 4) + 0.25 * (expect - Mat::Identity(4, 4)))).norm() < 1e-12);
}

TEST_CASE("Jacobi line spray") {
  // Chart order (x; u, p): V = (-u, 0, 0), so φ^t(x, u, p) = (x - t u, u, p).
  const VariableSet v({"x1", "y1", "y2"});
  const auto V = field(v, {"-y1", "0", "0"}, "y2");
  const Vec a = vec({0.2, 0.5, -0.4});
  const Vec b = flow(V, a, 1.0);
  CHECK(std::abs(b[0] - (0.2 - 0.5)) < 1e-13);
  const Trajectory tr = flow_with_jacobian(V, a, {0.0, 0.5, 1.0});
  // accumulator ∫ p ds = t p, gradient (0, 0, t)
  CHECK(tr.s[2] == doctest::Approx(-0.4));
  CHECK(tr.ds[1][2] == doctest::Approx(0.5));
}

TEST_CASE("group property and tangent-flow composition") {
  const auto V = so3_spray();
  SplitMix64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Vec a(6);
    for (int i = 0; i < 6; ++i) a[i] = rng.uniform(-1, 1);
    const double t = 0.3, s = 0.45;
    FlowOptions opt;
    opt.tol = 1e-11;
    const Vec lhs = flow(V, flow(V, a, t, opt), s, opt);
    const Vec rhs = flow(V, a, t + s, opt);
    CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 10 * opt.tol * 10);

    TrajectoryOptions to{256, {}};
    const Trajectory full = flow_with_jacobian(V, a, {0.0, t, t + s}, to);
    const Trajectory second = flow_with_jacobian(V, full.x[1], {0.0, s}, to);
    CHECK((full.J[2] - second.J[1] * full.J[1]).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("tangent flow matches finite differences of the flow") {
  const auto V = so3_spray();
  const Vec a = vec({0.3, -0.2, 0.5, 0.4, 0.1, -0.6});
  const Trajectory tr = flow_with_jacobian(V, a, {0.0, 1.0}, TrajectoryOptions{128, {}});
  FlowOptions opt;
  opt.tol = 1e-13;
  const double h = 1e-5;
  for (int j = 0; j < 6; ++j) {
    Vec ap = a, am = a;
    ap[j] += h;
    am[j] -= h;
    const Vec col = (flow(V, ap, 1.0, opt) - flow(V, am, 1.0, opt)) / (2 * h);
    CHECK((col - tr.J[1].col(j)).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("RK4 converges at fourth order on the so(3)* spray") {
  const auto V = so3_spray();
  const Vec a = vec({0.6, -0.4, 0.8, 0.9, 0.7, -0.8});
  const std::vector<double> grid{0.0, 1.0};
  const Vec ref = flow_with_jacobian(V, a, grid, TrajectoryOptions{2048, {}}).x[1];
  const double e1 = (flow_with_jacobian(V, a, grid, TrajectoryOptions{8, {}}).x[1] - ref).norm();
  const double e2 = (flow_with_jacobian(V, a, grid, TrajectoryOptions{16, {}}).x[1] - ref).norm();
  INFO("ratio " << e1 / e2);
  CHECK(e1 / e2 > 16 * 0.75);
  CHECK(e1 / e2 < 16 * 1.25);
}

TEST_CASE("leaving the box is an error") {
  const auto V = field(kV4, {"1", "0", "0", "0"});
  FlowOptions opt;
  opt.box = Box{vec({-1, -1, -1, -1}), vec({1, 1, 1, 1})};
  try {
    flow(V, vec({0.5, 0, 0, 0}), 1.0, opt);
    FAIL("expected a domain exit");
  } catch (const DomainExit& e) {
    CHECK(e.exit_time() > 0.5 - 0.2);
    CHECK(e.exit_time() <= 1.0);
  }
}

TEST_CASE("quadrature rules") {
  for (const QuadratureRule& rule : {QuadratureRule::simpson(64), QuadratureRule::gauss_legendre(12)}) {
    double s = 0;
    for (double w : rule.weights) s += w;
    CHECK(std::abs(s - 1.0) < 1e-14);
    CHECK(quad([](double) { return 3.0; }, rule) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(std::abs(quad([](double t) { return t * t * t; }, rule) - 0.25) < 1e-15);
  }
  // ∫ e^{-t}: Gauss-Legendre is at roundoff; composite Simpson with 64 intervals
  // sits on its asymptotic error h^4/180 (f'''(1) - f'''(0)) ≈ 2.1e-10.
  const double exact = 1 - std::exp(-1.0);
  auto f = [](double t) { return std::exp(-t); };
  CHECK(std::abs(quad(f, QuadratureRule::gauss_legendre(12)) - exact) < 1e-14);
  const double err = quad(f, QuadratureRule::simpson(64)) - exact;
  CHECK(err == doctest::Approx(std::pow(1.0 / 64, 4) / 180 * exact).epsilon(1e-3));
  CHECK(std::abs(quad(f, QuadratureRule::simpson(128)) - exact) < 1e-10);
  const auto gl = QuadratureRule::gauss_legendre(5);
  CHECK(std::abs(quad([](double t) { return std::pow(t, 9); }, gl) - 0.1) < 1e-14);
  const Vec A = vec({1.0, -2.0});
  const Vec half = quad([&](double t) -> Vec { return t * A; }, QuadratureRule::simpson(4));
  CHECK((half - 0.5 * A).norm() < 1e-15);
  CHECK_THROWS_AS(QuadratureRule::simpson(3), ShapeError);
}
