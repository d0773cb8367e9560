#include "doctest.h"

#include <chrono>
#include <cmath>

#include "mulform/errors.hpp"
#include "mulform/groupoid.hpp"

using namespace mulform;

namespace {

const VariableSet kX3 = VariableSet::chart(3, 0);

BivectorField so3() {
  BivectorField pi(3);
  pi.set(0, 1, parse("x3", kX3));
  pi.set(1, 2, parse("x1", kX3));
  pi.set(2, 0, parse("x2", kX3));
  return pi;
}

Box cube(int n, double h) { return Box{Vec::Constant(n, -h), Vec::Constant(n, h)}; }

std::shared_ptr<SprayGroupoid> poisson_groupoid(const BivectorField& pi, const Box& box) {
  AlgebroidChart A = cotangent_algebroid(pi, box);
  Spray V = default_spray(A);
  return std::make_shared<SprayGroupoid>(std::move(A), std::move(V));
}

Mat omega0(int n) {
  Mat O = Mat::Zero(2 * n, 2 * n);
  O.topRightCorner(n, n).setIdentity();
  O.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return O;
}

}  // namespace

TEST_CASE("zero Poisson structure: omega0 and fiber addition") {
  auto G = poisson_groupoid(BivectorField(2), cube(2, 5.0));
  const MultFormEvaluator M(G, linear_form(canonical_poisson_pair(2)), QuadratureRule::simpson(64));
  SplitMix64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vec g = sample_total(cube(2, 1.0), 2, 1.0, rng);
    CHECK((M.omega(g).to_matrix() - omega0(2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Vec a = (Vec(4) << 0.2, -0.3, 0.5, 0.7).finished();
  const Vec b = (Vec(4) << 0.2, -0.3, -0.1, 0.4).finished();
  const Vec ab = multiply_poisson(M, a, b);
  CHECK((ab - (Vec(4) << 0.2, -0.3, 0.4, 1.1).finished()).norm() < 1e-10);
  const Vec bad = (Vec(4) << 0.3, -0.3, -0.1, 0.4).finished();
  CHECK_THROWS_AS(multiply_poisson(M, a, bad), PreconditionError);
}

TEST_CASE("constant symplectic Poisson structure matches the affine-flow oracle") {
  // φ^t(x, p) = (x1 - t p2, x2 + t p1, p) and ∫_0^1 (φ^t)^*ω0 dt = ω0 + dp1∧dp2.
  BivectorField pi(2);
  pi.set(0, 1, Expr(1.0));
  auto G = poisson_groupoid(pi, cube(2, 10.0));
  const MultFormEvaluator M(G, linear_form(canonical_poisson_pair(2)), QuadratureRule::simpson(64));
  Mat oracle = omega0(2);
  oracle(2, 3) += 1.0;
  oracle(3, 2) -= 1.0;
  SplitMix64 rng(5);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec g = sample_total(cube(2, 1.0), 2, 1.0, rng);
    worst = std::max(worst, (M.omega(g).to_matrix() - oracle).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
  CHECK(fd_exterior_derivative([&](const Vec& g) { return M.omega(g); }, Vec::Constant(4, 0.3)).max_abs() < 1e-8);
}

TEST_CASE("so(3)* symplectic groupoid: realization and units formula") {
  auto G = poisson_groupoid(so3(), cube(3, 2.0));
  const MultFormEvaluator M(G, linear_form(canonical_poisson_pair(3)), QuadratureRule::simpson(64));
  const BivectorField pi = so3();
  SplitMix64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const Vec g = sample_total(cube(3, 0.8), 3, 0.5, rng);
    const auto traj = G->trajectory(g, M.grid());
    const Mat P = invert_2form(M.omega(*traj));
    const Mat ds = G->source_jacobian();
    const Mat dt = G->target_jacobian(*traj);
    const Vec x = g.head(3);
    const Vec y = G->target(g);
    CHECK((ds * P * ds.transpose() - pi.eval(std::span<const double>(x.data(), 3)).transpose()).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK((dt * P * dt.transpose() + pi.eval(std::span<const double>(y.data(), 3)).transpose()).cwiseAbs().maxCoeff() <
          1e-6);
  }
}

TEST_CASE("so(3)* units formula, inversion and round trips") {
  auto G = poisson_groupoid(so3(), cube(3, 2.0));
  const IMFormData pair = canonical_poisson_pair(3);
  const MultFormEvaluator M(G, linear_form(pair), QuadratureRule::simpson(64));
  const AlgebroidChart& A = G->algebroid();
  SplitMix64 rng(11);
  for (int i = 0; i < 5; ++i) {
    const Vec x = sample_point(cube(3, 1.0), rng);
    const std::span<const double> xs(x.data(), 3);
    // ω(v + a, w + b) = <b|v> - <a|w> + π(a, b)
    const Vec v = sample_total(cube(3, 1.0), 3, 1.0, rng);
    const Vec w = sample_total(cube(3, 1.0), 3, 1.0, rng);
    const Mat P = so3().eval(xs);
    const double expect = w.tail(3).dot(v.head(3)) - v.tail(3).dot(w.head(3)) + v.tail(3).dot(P * w.tail(3));
    Mat vs(6, 2);
    vs << v, w;
    CHECK(M.eval_omega(G->unit(x), vs) == doctest::Approx(expect).epsilon(1e-9));
    std::vector<AltTensor> l;
    for (const auto& f : pair.l) l.push_back(f.eval(xs));
    CHECK(units_form_predictor(A.anchor_matrix(xs), l, 2, vs) == doctest::Approx(expect).epsilon(1e-12));

    const UnitsDerivative du = differentiate_at_units(M, x);
    CHECK(units_round_trip_residual(du, pair, xs) < 1e-8);

    const Vec g = sample_total(cube(3, 0.8), 3, 0.5, rng);
    const Vec gi = G->inverse(g);
    CHECK((G->inverse(gi) - g).norm() < 1e-9);
    Mat di = G->trajectory(g, M.grid())->J.back();
    di.bottomRows(3) *= -1.0;
    CHECK((pullback(M.omega(gi), di) + M.omega(g)).max_abs() < 1e-6);
  }
  const LinearizationResult lin = linearization_check(M, (Vec(6) << 0.3, -0.2, 0.5, 0.4, 0.6, -0.3).finished());
  CHECK_FALSE(lin.exact);
  CHECK(lin.slope > 0.8);
  CHECK(lin.slope < 1.2);
}

TEST_CASE("so(3)* multiplication: unit laws, multiplicativity and associativity") {
  auto G = poisson_groupoid(so3(), cube(3, 2.0));
  const MultFormEvaluator M(G, linear_form(canonical_poisson_pair(3)), QuadratureRule::simpson(64));
  SplitMix64 rng(13);
  const Vec c = sample_total(cube(3, 0.5), 3, 0.4, rng);
  Vec b = G->unit(G->target(c));
  b.tail(3) = sample_total(cube(3, 0.5), 3, 0.4, rng).tail(3);
  Vec a = G->unit(G->target(b));
  a.tail(3) = sample_total(cube(3, 0.5), 3, 0.4, rng).tail(3);

  const auto t0 = std::chrono::steady_clock::now();
  const Vec ab = multiply_poisson(M, a, b);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("one product: " << ms << " ms");
  CHECK((multiply_poisson(M, G->unit(G->target(b)), b) - b).norm() < 1e-8);
  CHECK((multiply_poisson(M, a, G->unit(a.head(3))) - a).norm() < 1e-8);
  CHECK((ab.head(3) - b.head(3)).norm() == 0.0);
  CHECK((G->target(ab) - G->target(a)).norm() < 1e-9);

  const Vec bc = multiply_poisson(M, b, c);
  MultiplyOptions loose;
  loose.composability_tol = 1e-8;
  const Vec left = multiply_poisson(M, ab, c, loose);
  const Vec right = multiply_poisson(M, a, bc, loose);
  CHECK((left - right).lpNorm<Eigen::Infinity>() < 1e-6);

  // Multiplicativity along composable curves a(h) = (τ(b + h w), a_y + h v_y), b(h) = b + h w.
  auto product_curve = [&](const Vec& w, const Vec& vy) {
    return [&, w, vy](const Vec& hv) {
      const double h = hv[0];
      const Vec bh = b + h * w;
      Vec ah = G->unit(G->target(bh));
      ah.tail(3) = a.tail(3) + h * vy;
      Mat out(6, 1);
      out.col(0) = multiply_poisson(M, ah, bh);
      return out;
    };
  };
  auto tangent_a = [&](const Vec& w, const Vec& vy) {
    Vec v(6);
    const Mat dt = G->target_jacobian(*G->trajectory(b, M.grid()));
    v << dt * w, vy;
    return v;
  };
  const Vec w1 = sample_total(cube(3, 1.0), 3, 1.0, rng), w2 = sample_total(cube(3, 1.0), 3, 1.0, rng);
  const Vec v1 = sample_total(cube(3, 1.0), 3, 1.0, rng).tail(3), v2 = sample_total(cube(3, 1.0), 3, 1.0, rng).tail(3);
  const Vec zero = Vec::Zero(1), one = Vec::Ones(1);
  const Vec dmu1 = fd_directional(product_curve(w1, v1), zero, one, 1e-4).col(0);
  const Vec dmu2 = fd_directional(product_curve(w2, v2), zero, one, 1e-4).col(0);
  Mat pair_mu(6, 2), pair_a(6, 2), pair_b(6, 2);
  pair_mu << dmu1, dmu2;
  pair_a << tangent_a(w1, v1), tangent_a(w2, v2);
  pair_b << w1, w2;
  const double lhs = M.eval_omega(ab, pair_mu);
  const double rhs = M.eval_omega(a, pair_a) + M.eval_omega(b, pair_b);
  CHECK(std::abs(lhs - rhs) < 1e-6);
}

TEST_CASE("Jacobi line: closed form, contact margin and cocycle") {
  // π = 0, R = ∂x on R; chart (x; u, p).
  const VariableSet v1 = VariableSet::chart(1, 0);
  const AlgebroidChart A = jacobi_algebroid(BivectorField(1), VectorField({Expr(1.0)}), Box{});
  const Expr rate = jacobi_cocycle(A);
  auto G = std::make_shared<SprayGroupoid>(A, default_spray(A), rate);
  const MultFormEvaluator M(G, jacobi_linear_form(1), QuadratureRule::simpson(64));
  (void)v1;
  SplitMix64 rng(17);
  for (int i = 0; i < 20; ++i) {
    const Vec g = sample_total(cube(1, 1.0), 2, 1.0, rng);
    const double p = g[2];
    const double cu = std::abs(p) < 1e-8 ? 1.0 : (2 - 2 * std::exp(-p) - p * std::exp(-p)) / p;
    const double cx = -(1 - std::exp(-p));
    const AltTensor w = M.omega(g);
    CHECK(std::abs(w.component({0}) - cx) < 1e-8);
    CHECK(std::abs(w.component({1}) - cu) < 1e-8);
    CHECK(std::abs(w.component({2})) < 1e-12);
    const AltTensor dw = M.domega(g);
    const AltTensor dfd = fd_exterior_derivative([&](const Vec& h) { return M.omega(h); }, g);
    CHECK((dw - dfd).max_abs() < 1e-7);
    const double f = integrate_cocycle(*G, rate, g, QuadratureRule::simpson(64));
    CHECK(f == doctest::Approx(p).epsilon(1e-12));
    const auto tr = G->trajectory(g, M.grid());
    CHECK(std::abs(std::exp(-f) - transport_weight(*tr).back()) < 1e-10);
  }
  const Vec origin = Vec::Zero(3);
  const double contact = wedge(M.omega(origin), M.domega(origin)).max_abs();
  CHECK(contact == doctest::Approx(1.0).epsilon(1e-8));
  const LinearizationResult lin = linearization_check(M, (Vec(3) << 0.2, 0.5, -0.4).finished());
  CHECK(lin.slope > 0.8);
  CHECK(lin.slope < 1.2);
}

TEST_CASE("validity box discovery shrinks the fibers") {
  // Constant π = ∂1∧∂2 moves base points by t(-p2, p1): from [-0.5, 0.5]^2 inside [-1, 1]^2 needs |p| <= 0.5.
  BivectorField pi(2);
  pi.set(0, 1, Expr(1.0));
  auto G = poisson_groupoid(pi, cube(2, 1.0));
  ValidityOptions opt;
  opt.fiber_radius = 64.0;
  const Box b = discover_validity_box(*G, opt);
  CHECK(b.hi[2] == 0.5);
  CHECK(b.hi[0] == doctest::Approx(0.5));
  G->set_validity_box(b);
  SplitMix64 rng(1);
  for (int i = 0; i < 20; ++i) CHECK_NOTHROW(G->target(sample_total(Box{b.lo.head(2), b.hi.head(2)}, 2, b.hi[2], rng)));
}

TEST_CASE("vanishing spray makes the linearization exact") {
  auto G = poisson_groupoid(BivectorField(2), Box{});
  const MultFormEvaluator M(G, linear_form(canonical_poisson_pair(2)), QuadratureRule::gauss_legendre(4));
  const LinearizationResult lin = linearization_check(M, Vec::Constant(4, 0.5));
  CHECK(lin.exact);
}
