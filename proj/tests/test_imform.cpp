#include "doctest.h"

#include <cmath>

#include "mulform/imform.hpp"
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

}  // namespace

TEST_CASE("canonical pair gives the canonical symplectic form") {
  const LinearForm L = linear_form(canonical_poisson_pair(3));
  const AltTensor w = L.form.eval(std::vector<double>{0.3, -0.2, 0.7, 1.0, 2.0, -1.0});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double expect = (j == i + 3) ? 1.0 : (i == j + 3 ? -1.0 : 0.0);
      CHECK(w.component({i, j}) == doctest::Approx(expect));
    }
}

TEST_CASE("canonical pair is IM on so(3)* and a corrupted one is not") {
  const AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  IMFormData d = canonical_poisson_pair(3);
  const CheckReport good = im_residuals(A, d, 32);
  CHECK(good.passed());
  CHECK(good.find("im_l_equation")->residual < 1e-12);
  d.l[0] = FormField::monomial(3, Expr(-2.0), {0});
  const CheckReport bad = im_residuals(A, d, 32);
  CHECK_FALSE(bad.passed());
  CHECK(bad.find("im_l_equation")->residual > 1e-3);
}

TEST_CASE("linear form checks and recovery round trip") {
  const AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  const SpencerData s = canonical_poisson_pair(3).spencer();
  const LinearForm L = linear_form(s);
  const CheckReport rep = linear_form_checks(L, &s, A.box, 16);
  CHECK(rep.passed());
  CHECK(rep.find("recovery_round_trip")->residual < 1e-10);

  // Nonconstant data with a nonzero ν.
  IMFormData d = IMFormData::zero(2, 3, 2);
  d.l[0] = FormField::monomial(3, parse("x1*x2", kX3), {2});
  d.l[1] = FormField::monomial(3, parse("sin(x3)", kX3), {0});
  d.nu[0] = FormField::monomial(3, parse("x2^2", kX3), {0, 1});
  const SpencerData s2 = d.spencer();
  const LinearForm L2 = linear_form(s2);
  const CheckReport rep2 = linear_form_checks(L2, &s2, cube(3, 1.0), 16);
  CHECK(rep2.passed());
}

TEST_CASE("a form quadratic in the fibers fails the degree check") {
  LinearForm L;
  L.n = 1;
  L.r = 1;
  L.form = FormField::monomial(2, parse("y1^2", VariableSet::chart(1, 1)), {0});
  const CheckReport rep = linear_form_checks(L, nullptr, Box{}, 8);
  CHECK_FALSE(rep.find("fiber_degree")->pass);
  CHECK_FALSE(rep.find("linear_scaling")->pass);
  CHECK(rep.find("recovery_round_trip")->skipped);
}

TEST_CASE("d_IM squares to zero and maps IM forms to IM forms") {
  const AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  // Exact pair of a 1-form θ = x1 x2 dx3: (i_ρ θ, i_ρ dθ).
  const FormField theta = FormField::monomial(3, parse("x1*x2", kX3), {2});
  const IMFormData e = exact_pair(A, theta);
  CHECK(im_residuals(A, e, 16).passed());
  const IMFormData de = d_IM(e);
  CHECK(im_residuals(A, de, 16).passed());
  const IMFormData dde = d_IM(de);
  for (const auto& l : dde.l) CHECK(l.is_zero());
  for (const auto& nu : dde.nu) CHECK(nu.is_zero());
}

TEST_CASE("exact pair of a 2-form with nonzero differential") {
  const AlgebroidChart A = cotangent_algebroid(so3(), cube(3, 2.0));
  const FormField varpi = FormField::monomial(3, parse("x3", kX3), {0, 1});
  const IMFormData e = exact_pair(A, varpi);
  CHECK_FALSE(e.nu[0].is_zero());
  CHECK(im_residuals(A, e, 16).passed());
}

TEST_CASE("Jacobi linear form is du - p dx") {
  const LinearForm L = jacobi_linear_form(1);
  const AltTensor w = L.form.eval(std::vector<double>{0.4, 0.9, -1.5});
  CHECK(w.component({0}) == doctest::Approx(1.5));
  CHECK(w.component({1}) == doctest::Approx(1.0));
  CHECK(w.component({2}) == doctest::Approx(0.0));
  const SpencerData s = jacobi_spencer(1);
  CHECK(linear_form_checks(L, &s, Box{}, 8).passed());
  const RecoveredSpencer rec = recover(L, std::vector<double>{0.4});
  CHECK(rec.l[0].component({}) == doctest::Approx(1.0));
  CHECK(rec.l[1].component({}) == doctest::Approx(0.0));
}

TEST_CASE("fiber degree of expressions") {
  const VariableSet v = VariableSet::chart(2, 2);
  CHECK(fiber_degree(parse("x1*y1", v), 2) == 1);
  CHECK(fiber_degree(parse("sin(x2)*y1*y2", v), 2) == 2);
  CHECK(fiber_degree(parse("y1 + x1", v), 2) == kNotHomogeneous);
  CHECK(fiber_degree(parse("exp(y1)", v), 2) == kNotHomogeneous);
  CHECK(fiber_degree(Expr(0.0), 2) == kAnyDegree);
}
