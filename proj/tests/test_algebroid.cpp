#include "doctest.h"

#include <cmath>

#include "mulform/algebroid.hpp"
#include "mulform/errors.hpp"

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

// π = ∂y∧(∂x + y∂z), R = ∂z: a Jacobi (contact) structure on R³.
void contact(BivectorField& pi, VectorField& R) {
  pi = BivectorField(3);
  pi.set(1, 0, Expr(1.0));
  pi.set(1, 2, parse("x2", kX3));
  R = VectorField({Expr(0.0), Expr(0.0), Expr(1.0)});
}

// Bracket of sections given by frame coefficients s^a(x), t^b(x).
std::vector<Expr> section_bracket(const AlgebroidChart& A, const ExprStructureFunctions& c, const std::vector<Expr>& s,
                                  const std::vector<Expr>& t) {
  std::vector<Expr> out(static_cast<std::size_t>(A.r));
  for (int m = 0; m < A.r; ++m) {
    Expr e;
    for (int a = 0; a < A.r; ++a)
      for (int b = 0; b < A.r; ++b) e += s[static_cast<std::size_t>(a)] * t[static_cast<std::size_t>(b)] * c.c(a, b, m);
    for (int a = 0; a < A.r; ++a)
      for (int l = 0; l < A.n; ++l) {
        e += s[static_cast<std::size_t>(a)] * A.rho(l, a) * partial(t[static_cast<std::size_t>(m)], l);
        e -= t[static_cast<std::size_t>(a)] * A.rho(l, a) * partial(s[static_cast<std::size_t>(m)], l);
      }
    out[static_cast<std::size_t>(m)] = e;
  }
  return out;
}

std::vector<Expr> jet(const Expr& u, int n) {
  std::vector<Expr> j{u};
  for (int i = 0; i < n; ++i) j.push_back(partial(u, i));
  return j;
}

}  // namespace

TEST_CASE("abelian algebroid has zero residuals") {
  AlgebroidChart A = raw_algebroid(2, 2, std::vector<Expr>(4), std::vector<Expr>(8), Box{});
  const CheckReport rep = check_algebroid(A, 10);
  for (const auto& e : rep.entries()) CHECK(e.residual == 0.0);
}

TEST_CASE("so(3)* cotangent algebroid") {
  AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  const auto& c = dynamic_cast<const ExprStructureFunctions&>(*A.structure);
  CHECK(c.c(0, 1, 2).is_one());
  CHECK(c.c(1, 2, 0).is_one());
  CHECK(c.c(0, 1, 0).is_zero());
  const CheckReport rep = check_algebroid(A, 100);
  CHECK(rep.passed());
  for (const auto& e : rep.entries()) CHECK(e.residual < 1e-10);

  // corrupted c_12^1 is flagged
  std::vector<Expr> bad(27);
  std::vector<Expr> anchor = A.anchor;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      for (int k = 0; k < 3; ++k) bad[static_cast<std::size_t>((i * 3 + j) * 3 + k)] = c.c(i, j, k);
  bad[1 * 3 + 0] = bad[1 * 3 + 0] + Expr(1.0);
  const CheckReport broken = check_algebroid(raw_algebroid(3, 3, anchor, bad, cube(3, 2.0)), 50);
  CHECK_FALSE(broken.passed());
  CHECK(std::max(broken.find("anchor_morphism")->residual, broken.find("jacobi_identity")->residual) > 0.1);
}

TEST_CASE("Jacobi algebroid bracket integrates the jet bracket") {
  BivectorField pi;
  VectorField R;
  contact(pi, R);
  const AlgebroidChart A = jacobi_algebroid(pi, R, cube(3, 1.0));
  CHECK(check_algebroid(A, 50).passed());
  const auto& c = dynamic_cast<const ExprStructureFunctions&>(*A.structure);
  const Expr u = parse("x1*x2 + sin(x3)", kX3);
  const Expr v = parse("exp(x1) - x3*x2^2", kX3);
  // {u, v} = π(du, dv) + R(u) v - u R(v)
  Expr uv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) uv += pi(i, j) * partial(u, i) * partial(v, j);
  for (int i = 0; i < 3; ++i) uv += R[i] * (partial(u, i) * v - u * partial(v, i));
  const auto lhs = section_bracket(A, c, jet(u, 3), jet(v, 3));
  const auto rhs = jet(uv, 3);
  for (const std::vector<double>& x : {std::vector<double>{0.2, -0.5, 0.7}, std::vector<double>{-0.9, 0.3, 0.1}})
    for (int m = 0; m < 4; ++m)
      CHECK(lhs[static_cast<std::size_t>(m)].eval(x) ==
            doctest::Approx(rhs[static_cast<std::size_t>(m)].eval(x)).epsilon(1e-12));
}

TEST_CASE("Jacobi algebroid examples") {
  const VariableSet v1 = VariableSet::chart(1, 0);
  BivectorField pi(1);
  VectorField R({Expr(1.0)});
  const AlgebroidChart A = jacobi_algebroid(pi, R, cube(1, 1.0));
  // ρ(u, p) = -u ∂x
  CHECK(A.rho(0, 0).constant_value() == -1.0);
  CHECK(A.rho(0, 1).is_zero());
  const Spray V = default_spray(A);
  std::vector<double> pt{0.3, 0.5, -0.2};
  CHECK(V.components[0].eval(pt) == doctest::Approx(-0.5));
  CHECK(V.components[1].is_zero());

  const AlgebroidChart Z = jacobi_algebroid(BivectorField(2), VectorField::zero(2), cube(2, 1.0));
  for (const auto& e : check_algebroid(Z, 5).entries()) CHECK(e.residual == 0.0);

  // so(3)* with R = 0 embeds the Poisson structure functions; the u-direction is
  // central but c_ij^0 = -π^{ij} records the jet of the bracket of linear functions.
  const AlgebroidChart J = jacobi_algebroid(so3(), VectorField::zero(3), cube(3, 1.0));
  const AlgebroidChart C = cotangent_algebroid(so3(), cube(3, 1.0));
  const auto& cj = dynamic_cast<const ExprStructureFunctions&>(*J.structure);
  const auto& cc = dynamic_cast<const ExprStructureFunctions&>(*C.structure);
  std::vector<double> x{0.4, -0.1, 0.8};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) CHECK(cj.c(1 + i, 1 + j, 1 + k).eval(x) == cc.c(i, j, k).eval(x));
      CHECK(cj.c(0, 1 + j, 1 + i).eval(x) == 0.0);
      CHECK(cj.c(1 + i, 1 + j, 0).eval(x) == doctest::Approx(-so3()(i, j).eval(x)));
    }
  CHECK(check_algebroid(J, 30).passed());

  // incompatible data is rejected
  BivectorField bad(3);
  bad.set(0, 1, Expr(1.0));
  CHECK_THROWS_AS(jacobi_algebroid(bad, VectorField({Expr(0.0), Expr(0.0), Expr(1.0)}), cube(3, 1.0)),
                  PreconditionError);
}

TEST_CASE("Dirac algebroids") {
  // graph of a constant closed 2-form ϖ = dx1∧dx2 + 2 dx2∧dx3 on R³
  Mat W = Mat::Zero(3, 3);
  W(0, 1) = 1;
  W(1, 2) = 2;
  W = W - Mat(W.transpose());
  auto f = std::make_shared<DiracFrame>();
  for (int i = 0; i < 3; ++i) {
    VectorField v = VectorField::zero(3);
    v[i] = Expr(1.0);
    FormField a(3, 1);
    // ϖ♭ ∂_i = i_{∂i} ϖ = Σ_j ϖ_ij dx^j
    for (int j = 0; j < 3; ++j) a.at(static_cast<std::size_t>(j)) = Expr(W(i, j));
    f->v.push_back(v);
    f->alpha.push_back(a);
  }
  const AlgebroidChart A = dirac_algebroid(f, cube(3, 1.0));
  std::vector<double> c;
  A.structure->eval(std::vector<double>{0.1, 0.2, 0.3}, c);
  for (double v : c) CHECK(std::abs(v) < 1e-14);
  CHECK(check_algebroid(A, 20).passed());

  // graph of so(3)*: e_i = π♯dx^i + dx^i reproduces the cotangent structure functions.
  auto g = std::make_shared<DiracFrame>();
  const BivectorField pi = so3();
  for (int i = 0; i < 3; ++i) {
    VectorField v = VectorField::zero(3);
    for (int m = 0; m < 3; ++m) v[m] = pi(i, m);
    g->v.push_back(v);
    g->alpha.push_back(FormField::monomial(3, Expr(1.0), {i}));
  }
  const AlgebroidChart D = dirac_algebroid(g, cube(3, 1.0));
  const AlgebroidChart C = cotangent_algebroid(pi, cube(3, 1.0));
  SplitMix64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Vec x = sample_point(D.box, rng);
    std::span<const double> xs(x.data(), 3);
    std::vector<double> cd, cc;
    D.structure->eval(xs, cd);
    C.structure->eval(xs, cc);
    for (std::size_t k = 0; k < cd.size(); ++k) CHECK(std::abs(cd[k] - cc[k]) < 1e-8);
  }
  CHECK(check_algebroid(D, 30).passed());

  // non-Lagrangian input: α_1 = dx1 with v_1 = ∂1 gives ⟨e, e⟩ = 2
  auto bad = std::make_shared<DiracFrame>(*f);
  bad->alpha[0] = FormField::monomial(3, Expr(1.0), {0});
  try {
    dirac_algebroid(bad, cube(3, 1.0));
    FAIL("expected rejection");
  } catch (const PreconditionError& e) {
    CHECK(e.check() == "lagrangian");
    CHECK(e.residual() == doctest::Approx(2.0));
  }
}

TEST_CASE("default spray and its checks") {
  const AlgebroidChart zero = cotangent_algebroid(BivectorField(2), Box{});
  for (const Expr& e : default_spray(zero).components) CHECK(e.is_zero());

  const AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  Spray V = default_spray(A);
  const CheckReport rep = check_spray(V, A, 20);
  CHECK(rep.find("spray_anchor")->residual == 0.0);
  CHECK(rep.find("spray_scaling")->residual < 1e-8);

  // A quadratic fiber term is still a spray (it is a Christoffel-type correction).
  Spray quadratic = V;
  quadratic.components[3] = quadratic.components[3] + Expr::variable(3) * Expr::variable(3);
  CHECK(check_spray(quadratic, A, 10).passed());

  // A term of the wrong homogeneity breaks the scaling identity.
  Spray broken = V;
  broken.components[4] = broken.components[4] + Expr(0.5) * Expr::variable(3);
  const CheckReport bad = check_spray(broken, A, 10);
  CHECK(bad.find("spray_scaling")->residual > 1e-3);
  CHECK_FALSE(bad.passed());
}

TEST_CASE("transport weight") {
  const AlgebroidChart A = jacobi_algebroid(BivectorField(1), VectorField({Expr(1.0)}), cube(1, 5.0));
  const Spray V = default_spray(A);
  const VectorFieldEvaluator ev = V.evaluator(jacobi_cocycle(A));
  Vec a(3);
  a << 0.1, 0.4, 0.7;  // (x, u, p)
  const Trajectory tr = flow_with_jacobian(ev, a, {0.0, 0.25, 0.5, 1.0});
  const auto w = transport_weight(tr);
  for (std::size_t j = 0; j < w.size(); ++j) CHECK(std::abs(w[j] - std::exp(-tr.t[j] * 0.7)) < 1e-14);
  CHECK(std::abs(w[1] * std::exp(-(tr.s[3] - tr.s[1])) - w[3]) < 1e-10);

  const VectorFieldEvaluator plain = V.evaluator();
  for (double v : transport_weight(flow_with_jacobian(plain, a, {0.0, 1.0}))) CHECK(v == 1.0);
}
