#include "doctest.h"

#include <cmath>

#include "mulform/errors.hpp"
#include "mulform/expr.hpp"
#include "mulform/fields.hpp"
#include "mulform/rng.hpp"

using namespace mulform;

namespace {

const VariableSet kVars = VariableSet::chart(3, 2);

double eval_at(const Expr& e, std::vector<double> x) { return e.eval(x); }

// Fourth-order central difference of e along variable `var`.
double fd(const Expr& e, std::vector<double> x, int var, double h) {
  auto at = [&](double dx) {
    std::vector<double> y = x;
    y[static_cast<std::size_t>(var)] += dx;
    return e.eval(y);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

const char* kSamples[] = {
    "x1*x2 + 1",
    "sin(x3)^2",
    "exp(2*x1) - x2/(1 + x1^2)",
    "log(2 + cos(x1*y1)) * sqrt(3 + x2^2)",
    "pow(x1 - y2, 3) / (2 + sin(x2))",
    "-x1^2 + -(-x2)",
    "y1*y2*x3 - 1.5e-1*x1",
};

}  // namespace

TEST_CASE("parse builds the expected trees") {
  Expr e = parse("x1*x2 + 1", kVars);
  CHECK(e.op() == Op::Add);
  CHECK(e.lhs().op() == Op::Mul);
  CHECK(e.rhs().is_one());

  Expr s = parse("sin(x3)^2", kVars);
  CHECK(s.op() == Op::Pow);
  CHECK(s.exponent() == 2);
  CHECK(s.lhs().op() == Op::Sin);

  // unary minus binds tighter than ^
  CHECK(eval_at(parse("-x1^2", kVars), {3, 0, 0, 0, 0}) == doctest::Approx(9.0));
  CHECK(eval_at(parse("2 - 3 - 4", kVars), {0, 0, 0, 0, 0}) == doctest::Approx(-5.0));
  CHECK(eval_at(parse("8 / 4 / 2", kVars), {0, 0, 0, 0, 0}) == doctest::Approx(1.0));
}

TEST_CASE("parse errors carry positions") {
  try {
    parse("x1*(x2", kVars);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 4);
  }
  try {
    parse("x1 +\n  zz", kVars);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 3);
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("sin(x1, x2)", kVars), ParseError);
  CHECK_THROWS_AS(parse("pow(x1)", kVars), ParseError);
  CHECK_THROWS_AS(parse("x1^1.5", kVars), ParseError);
  CHECK_THROWS_AS(parse("tan(x1)", kVars), ParseError);
  CHECK_THROWS_AS(parse("", kVars), ParseError);
  CHECK_THROWS_AS(parse("x1 x2", kVars), ParseError);
}

TEST_CASE("printer round-trips") {
  for (const char* src : kSamples) {
    const Expr e = parse(src, kVars);
    const std::string printed = to_string(e, kVars);
    const Expr back = parse(printed, kVars);
    INFO(src << " -> " << printed);
    CHECK(structurally_equal(e, back));
  }
}

TEST_CASE("domain violations raise instead of producing NaN") {
  CHECK_THROWS_AS(eval_at(parse("log(x1)", kVars), {-1, 0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(eval_at(parse("sqrt(x1)", kVars), {-1, 0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(eval_at(parse("1/x1", kVars), {0, 0, 0, 0, 0}), DomainError);
  Program p({parse("1/x1", kVars)});
  std::vector<double> x{0, 0, 0, 0, 0}, out(1);
  CHECK_THROWS_AS(p.run(x, out), DomainError);
}

TEST_CASE("partial derivatives") {
  const Expr sq = parse("x1*x1", kVars);
  CHECK(eval_at(partial(sq, 0), {1.5, 0, 0, 0, 0}) == doctest::Approx(3.0));
  CHECK(partial(parse("x1", kVars), 1).is_zero());
  const Expr e = parse("exp(2*x1)", kVars);
  const std::vector<double> origin{0, 0, 0, 0, 0};
  CHECK(eval_at(partial(e, 0), origin) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(fd(e, origin, 0, 1e-5) - 2.0) < 1e-9);
}

TEST_CASE("mixed partials commute and match finite differences") {
  SplitMix64 rng(7);
  for (const char* src : kSamples) {
    const Expr e = parse(src, kVars);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x(5);
      for (double& v : x) v = rng.uniform(-0.9, 0.9);
      for (int u = 0; u < 5; ++u) {
        const Expr du = partial(e, u);
        const double h = 1e-4 * (1.0 + std::abs(x[static_cast<std::size_t>(u)]));
        const double exact = du.eval(x);
        CHECK(std::abs(exact - fd(e, x, u, h)) <= 1e-7 * std::max(1.0, std::abs(exact)));
        for (int v = 0; v < 5; ++v) {
          const double uv = partial(du, v).eval(x);
          const double vu = partial(partial(e, v), u).eval(x);
          CHECK(std::abs(uv - vu) <= 1e-12 * std::max(1.0, std::abs(uv)));
        }
      }
    }
  }
}

TEST_CASE("compiled programs agree with tree evaluation") {
  std::vector<Expr> outs;
  for (const char* src : kSamples) outs.push_back(parse(src, kVars));
  outs.push_back(outs[0] * outs[1] + outs[0]);  // shared subtrees
  Program prog(outs);
  SplitMix64 rng(3);
  std::vector<double> out(outs.size());
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5);
    for (double& v : x) v = rng.uniform(-0.9, 0.9);
    prog.run(x, out);
    for (std::size_t k = 0; k < outs.size(); ++k) CHECK(out[k] == doctest::Approx(outs[k].eval(x)).epsilon(1e-14));
  }
}

TEST_CASE("exterior derivative") {
  const VariableSet v = VariableSet::chart(3, 0);
  // d(x1 dx2) = dx1 ^ dx2
  FormField w = FormField::monomial(3, parse("x1", v), {1});
  FormField dw = exterior_derivative(w);
  std::vector<double> x{0.3, -0.2, 0.5};
  CHECK(dw.eval(x).component({0, 1}) == doctest::Approx(1.0));
  CHECK(dw.eval(x).component({0, 2}) == 0.0);
  // d(dx1 ^ dx2) = 0
  CHECK(exterior_derivative(FormField::monomial(3, Expr(1.0), {0, 1})).is_zero());
  // d(sin(x1) dx2) at x1 = 0
  FormField s = FormField::monomial(3, parse("sin(x1)", v), {1});
  CHECK(exterior_derivative(s).eval(std::vector<double>{0, 0, 0}).component({0, 1}) == doctest::Approx(1.0));

  // d∘d = 0 on generic forms
  SplitMix64 rng(11);
  for (int k = 0; k <= 1; ++k) {
    FormField h(3, k);
    const char* base[] = {"x1*x2*sin(x3)", "exp(x1 - x2^2)", "cos(x2*x3)/(2 + x1^2)"};
    for (std::size_t p = 0; p < h.size(); ++p) h.at(p) = parse(base[p % 3], v);
    const FormField ddh = exterior_derivative(exterior_derivative(h));
    for (int t = 0; t < 20; ++t) {
      std::vector<double> y{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      CHECK(ddh.eval(y).max_abs() < 1e-14);
    }
  }
}

TEST_CASE("Schouten bracket") {
  const VariableSet v = VariableSet::chart(3, 0);
  // constant π
  BivectorField c(3);
  c.set(0, 1, Expr(2.0));
  c.set(1, 2, Expr(-1.0));
  std::vector<double> x{0.1, 0.2, 0.3};
  CHECK(schouten(c, c, x).max_abs() == 0.0);

  // so(3)*: π^{ij} = ε_{ijk} x_k
  BivectorField so3(3);
  so3.set(0, 1, parse("x3", v));
  so3.set(1, 2, parse("x1", v));
  so3.set(2, 0, parse("x2", v));
  SplitMix64 rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> y{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    CHECK(schouten(so3, so3, y).max_abs() < 1e-12);
  }

  // Generic bivectors against a direct loop over 2 Σ_cyc π^{il} ∂_l π^{jk}.
  auto brute = [&](const BivectorField& p, std::vector<double> at) {
    double s = 0;
    const int I[3][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
    for (auto& cyc : I)
      for (int l = 0; l < 3; ++l) s += 2 * p(cyc[0], l).eval(at) * partial(p(cyc[1], cyc[2]), l).eval(at);
    return s;
  };
  std::vector<double> y{0.7, -0.4, 1.3};
  BivectorField q(3);
  q.set(0, 1, parse("x3", v));
  q.set(1, 2, parse("x2*x1", v));
  q.set(0, 2, parse("x2", v));
  CHECK(schouten(q, q, y).component({0, 1, 2}) == doctest::Approx(brute(q, y)));

  // π = x1 ∂1∧∂2, R = ∂1 on R²: L_R π = ∂1∧∂2, so [π, R] = -∂1∧∂2.
  const VariableSet v2 = VariableSet::chart(2, 0);
  BivectorField p2(2);
  p2.set(0, 1, parse("x1", v2));
  VectorField R({Expr(1.0), Expr(0.0)});
  CHECK(schouten(p2, R, std::vector<double>{1, 1}).component({0, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("Jacobi compatibility of the contact example") {
  // π = ∂y∧(∂x + y∂z), R = ∂z on R³ with (x, y, z) = (x1, x2, x3).
  const VariableSet v = VariableSet::chart(3, 0);
  BivectorField pi(3);
  pi.set(1, 0, Expr(1.0));
  pi.set(1, 2, parse("x2", v));
  VectorField R({Expr(0.0), Expr(0.0), Expr(1.0)});
  std::vector<double> x{0.3, -0.8, 0.4};
  const AltTensor pp = schouten(pi, pi, x);
  const AltTensor rp = wedge(R, pi, x);
  CHECK(pp.component({0, 1, 2}) == doctest::Approx(2 * rp.component({0, 1, 2})));
  CHECK(rp.max_abs() > 0.5);
  CHECK(schouten(pi, R, x).max_abs() == 0.0);
}
