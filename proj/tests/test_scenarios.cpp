#include "doctest.h"

#include <cmath>
#include <iostream>

#include "mulform/errors.hpp"
#include "mulform/scenarios.hpp"

using namespace mulform;

namespace {

const VariableSet kX2 = VariableSet::chart(2, 0);
const VariableSet kX3 = VariableSet::chart(3, 0);
const VariableSet kX4 = VariableSet::chart(4, 0);

Box cube(int n, double h) { return Box{Vec::Constant(n, -h), Vec::Constant(n, h)}; }

BivectorField so3() {
  BivectorField pi(3);
  pi.set(0, 1, parse("x3", kX3));
  pi.set(1, 2, parse("x1", kX3));
  pi.set(2, 0, parse("x2", kX3));
  return pi;
}

BivectorField constant_pi2() {
  BivectorField pi(2);
  pi.set(0, 1, Expr(1.0));
  return pi;
}

TensorField11 tensor(int n, const std::vector<std::string>& entries, const VariableSet& vars) {
  TensorField11 t{n, {}};
  for (const auto& s : entries) t.m.push_back(parse(s, vars));
  return t;
}

ScenarioOptions quick() {
  ScenarioOptions o;
  o.samples = 12;
  o.pair_samples = 6;
  o.triple_samples = 4;
  return o;
}

void show(const CheckReport& rep) {
  for (const auto& e : rep.entries())
    if (!e.pass || e.skipped) std::cerr << "  " << e.name << " = " << e.residual << " (tol " << e.tolerance << ")"
                                        << (e.skipped ? " skipped: " + e.note : "") << "\n";
}

double residual(const CheckReport& rep, const std::string& name) {
  const CheckEntry* e = rep.find(name);
  REQUIRE_MESSAGE(e != nullptr, name);
  return e->residual;
}

}  // namespace

TEST_CASE("so(3)* scenario report passes end to end") {
  const SymplecticGroupoid S = build_symplectic_groupoid(so3(), cube(3, 2.0), quick());
  show(S.report);
  CHECK(S.report.passed());
  for (const char* name : {"realization_source", "realization_target", "inversion", "units_formula", "im_round_trip",
                           "multiplicativity", "associativity", "unit_laws", "cocycle_additivity",
                           "cocycle_exactness", "nondegeneracy_margin", "linearization_slope"})
    CHECK_MESSAGE(S.report.find(name) != nullptr, name);
}

TEST_CASE("non-Poisson bivector is rejected before any flow") {
  BivectorField pi(3);
  // v = (-x2, x1, 1) with v . curl v = 2.
  pi.set(0, 1, Expr(1.0));
  pi.set(1, 2, parse("-x2", kX3));
  pi.set(2, 0, parse("x1", kX3));
  try {
    build_symplectic_groupoid(pi, cube(3, 1.0), quick(), false);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(e.check() == "poisson_identity");
    CHECK(e.residual() > 1e-3);
  }
}

TEST_CASE("Nijenhuis pair with torsion: zero Poisson structure on R3") {
  // N = diag(x2, x1, 1) has T(e1, e2) = (x2 - x1)(e1 + e2) in the first two slots.
  ScenarioOptions o = quick();
  o.multiplication_checks = false;
  const SymplecticGroupoid S = build_symplectic_groupoid(BivectorField(3), cube(3, 1.0), o, false);
  const TensorField11 l = tensor(3, {"x2", "0", "0", "0", "x1", "0", "0", "0", "1"}, kX3);
  const Vec x = (Vec(3) << 0.3, -0.2, 0.1).finished();
  const Vec T = nijenhuis_torsion(l, as_span(x), Vec::Unit(3, 0), Vec::Unit(3, 1));
  CHECK(T[0] == doctest::Approx(-0.5));
  CHECK(T[1] == doctest::Approx(-0.5));
  CHECK(T[2] == doctest::Approx(0.0));
  const CheckReport rep = nijenhuis_checks(S, l, o);
  show(rep);
  CHECK(rep.passed());
  CHECK(rep.find("omega_Lk_routes")->skipped);
}

TEST_CASE("torsion-free Nijenhuis pair on so(3)*: two routes agree") {
  ScenarioOptions o = quick();
  o.multiplication_checks = false;
  const SymplecticGroupoid S = build_symplectic_groupoid(so3(), cube(3, 2.0), o, false);
  const TensorField11 l = TensorField11::identity(3, 2.0);
  const CheckReport rep = nijenhuis_checks(S, l, o);
  show(rep);
  CHECK(rep.passed());
  CHECK(!rep.find("omega_Lk_routes")->skipped);
}

TEST_CASE("holomorphic pairs in dimension 2 and 4") {
  ScenarioOptions o = quick();
  {
    const SymplecticGroupoid S = build_symplectic_groupoid(BivectorField(2), cube(2, 1.0), o, false);
    const CheckReport rep = holomorphic_checks(S, tensor(2, {"0", "1", "-1", "0"}, kX2), o);
    show(rep);
    CHECK(rep.passed());
  }
  {
    BivectorField pi(4);
    pi.set(0, 2, Expr(1.0));
    pi.set(1, 3, Expr(-1.0));
    const SymplecticGroupoid S = build_symplectic_groupoid(pi, cube(4, 1.0), o, false);
    const TensorField11 J =
        tensor(4, {"0", "1", "0", "0", "-1", "0", "0", "0", "0", "0", "0", "1", "0", "0", "-1", "0"}, kX4);
    const CheckReport rep = holomorphic_checks(S, J, o);
    show(rep);
    CHECK(rep.passed());
  }
}

TEST_CASE("generalized complex triple and its algebraic precheck") {
  ScenarioOptions o = quick();
  const SymplecticGroupoid S = build_symplectic_groupoid(constant_pi2(), cube(2, 1.0), o, false);
  const double s = 0.5;
  const TensorField11 l = TensorField11::identity(2, s);
  const FormField varpi = FormField::monomial(2, Expr(1.0 + s * s), {0, 1});
  const CheckReport rep = gcs_identity_check(S, l, varpi, o);
  show(rep);
  CHECK(rep.passed());
  CHECK(residual(rep, "gcs_identity") < 1e-6);

  const TensorField11 bad = tensor(2, {"0", "0.5", "-0.5", "0"}, kX2);
  const CheckReport fail = gcs_identity_check(S, bad, varpi, o);
  CHECK(!fail.find("gcs_relation")->pass);
  CHECK(fail.find("gcs_identity")->skipped);
}

TEST_CASE("exact multiplicative forms on so(3)*") {
  ScenarioOptions o = quick();
  const SymplecticGroupoid S = build_symplectic_groupoid(so3(), cube(3, 2.0), o, false);
  const FormField w2 = FormField::monomial(3, parse("x3", kX3), {0, 1});
  const CheckReport rep = exact_form_checks(S.G, w2, o);
  show(rep);
  CHECK(rep.passed());
  const FormField w1 = FormField::monomial(3, parse("x1*x2", kX3), {2});
  const CheckReport rep1 = exact_form_checks(S.G, w1, o);
  show(rep1);
  CHECK(rep1.passed());
}

TEST_CASE("Dirac structure: graph of a closed 2-form") {
  // L = graph(ϖ), ϖ = (1 + x1^2) dx1∧dx2: frame v_i = e_i, α_i = i_{e_i}ϖ.
  auto frame = std::make_shared<DiracFrame>();
  const FormField varpi = FormField::monomial(2, parse("1 + x1^2", kX2), {0, 1});
  for (int i = 0; i < 2; ++i) {
    VectorField v = VectorField::zero(2);
    v[i] = Expr(1.0);
    frame->alpha.push_back(interior(v, varpi));
    frame->v.push_back(v);
  }
  frame->H = FormField(2, 0);
  const DiracScenario D = build_dirac(frame, cube(2, 1.0), quick(), &varpi);
  show(D.report);
  CHECK(D.report.passed());
}

TEST_CASE("Dirac structure: graph of the so(3)* bivector") {
  auto frame = std::make_shared<DiracFrame>();
  const BivectorField pi = so3();
  for (int i = 0; i < 3; ++i) {
    VectorField v = VectorField::zero(3);
    for (int j = 0; j < 3; ++j) v[j] = pi(i, j);
    frame->v.push_back(v);
    frame->alpha.push_back(FormField::monomial(3, Expr(1.0), {i}));
  }
  frame->H = FormField(3, 0);
  const DiracScenario D = build_dirac(frame, cube(3, 1.0), quick());
  show(D.report);
  CHECK(D.report.passed());
}

TEST_CASE("contact groupoid of the Jacobi line") {
  VectorField R = VectorField::zero(1);
  R[0] = Expr(1.0);
  const JacobiScenario J = build_jacobi(BivectorField(1), R, cube(1, 1.0), quick());
  show(J.report);
  CHECK(J.report.passed());
  CHECK(residual(J.report, "closed_form") < 1e-8);
  CHECK(residual(J.report, "contact_margin_origin") == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("convergence: fourth order on so(3)*, exact for constant pi") {
  const BivectorField pi = so3();
  auto A = std::make_shared<AlgebroidChart>(cotangent_algebroid(pi, cube(3, 4.0)));
  auto make = [&](const QuadratureRule& rule, int steps) {
    auto G = std::make_shared<SprayGroupoid>(*A, default_spray(*A), Expr(), steps);
    return std::make_shared<MultFormEvaluator>(G, linear_form(canonical_poisson_pair(3)), rule);
  };
  const std::vector<Vec> pts{(Vec(6) << 0.3, -0.2, 0.5, 0.4, 0.1, -0.3).finished(),
                             (Vec(6) << -0.5, 0.6, 0.1, -0.2, 0.5, 0.3).finished()};
  const ConvergenceResult r = convergence_study(make, pts, {4, 8, 16, 32, 64});
  CHECK(r.quadrature_order > 3.5);
  CHECK(r.ode_order > 3.5);
  CHECK(r.reference == "finest");

  auto A2 = std::make_shared<AlgebroidChart>(cotangent_algebroid(constant_pi2(), cube(2, 4.0)));
  auto make2 = [&](const QuadratureRule& rule, int steps) {
    auto G = std::make_shared<SprayGroupoid>(*A2, default_spray(*A2), Expr(), steps);
    return std::make_shared<MultFormEvaluator>(G, linear_form(canonical_poisson_pair(2)), rule);
  };
  auto oracle = [](const Vec&) {
    Mat O = Mat::Zero(4, 4);
    O.topRightCorner(2, 2).setIdentity();
    O.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
    O(2, 3) += 1.0;
    O(3, 2) -= 1.0;
    return AltTensor::from_matrix(O);
  };
  const std::vector<Vec> pts2{(Vec(4) << 0.3, -0.2, 0.5, 0.4).finished()};
  const ConvergenceResult r2 = convergence_study(make2, pts2, {4, 8, 16}, oracle);
  CHECK(r2.quadrature_exact);
  CHECK(std::isnan(r2.quadrature_order));
  CHECK(r2.reference == "closed_form");
}

TEST_CASE("twisted Dirac structure: graph of B with H = -dB") {
  // B = c x1 dx2∧dx3 and H = -c dx1∧dx2∧dx3; the pair is the exact pair of -B.
  const double c = 0.7;
  auto frame = std::make_shared<DiracFrame>();
  const FormField B = FormField::monomial(3, Expr(c) * parse("x1", kX3), {1, 2});
  for (int i = 0; i < 3; ++i) {
    VectorField v = VectorField::zero(3);
    v[i] = Expr(1.0);
    frame->alpha.push_back(interior(v, B));
    frame->v.push_back(v);
  }
  frame->H = FormField::monomial(3, Expr(-c), {0, 1, 2});
  const DiracScenario D = build_dirac(frame, cube(3, 1.0), quick(), &B);
  show(D.report);
  CHECK(D.report.passed());
  CHECK(residual(D.report, "twisted_closedness") < 1e-6);
  CHECK(residual(D.report, "H_closed") == 0.0);

  auto wrong = std::make_shared<DiracFrame>(*frame);
  wrong->H = FormField::monomial(3, Expr(c), {0, 1, 2});
  CHECK_THROWS_AS(build_dirac(wrong, cube(3, 1.0), quick()), PreconditionError);
}

TEST_CASE("realization for pi = x1 d1^d2") {
  BivectorField pi(2);
  pi.set(0, 1, parse("x1", kX2));
  ScenarioOptions o = quick();
  o.multiplication_checks = false;
  const SymplecticGroupoid S = build_symplectic_groupoid(pi, cube(2, 1.0), o);
  show(S.report);
  CHECK(S.report.passed());
  CHECK(residual(S.report, "realization_source") < 1e-6);
}

TEST_CASE("omega_L for l = id, c id and J0") {
  ScenarioOptions o = quick();
  const SymplecticGroupoid S = build_symplectic_groupoid(so3(), cube(3, 2.0), o, false);
  SplitMix64 rng(9);
  const auto id = omega_L(S, TensorField11::identity(3));
  const auto twice = omega_L(S, TensorField11::identity(3, 2.0));
  for (int i = 0; i < 5; ++i) {
    const Vec g = sample_validity(*S.G, rng);
    const AltTensor w = S.omega->omega(g);
    CHECK((id->omega(g) - w).max_abs() < 1e-12);
    CHECK((twice->omega(g) - 2.0 * w).max_abs() < 1e-12);
    CHECK((L_tensor(w, id->omega(g)) - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  }

  // Constant π = ∂1∧∂2 with l = J0: the integrand (J0 p ∘ φ^t)^*ω0 is quadratic in t
  // along the affine flow, so Simpson on the hand-built pullback is an exact oracle.
  const SymplecticGroupoid C = build_symplectic_groupoid(constant_pi2(), cube(2, 1.0), o, false);
  const TensorField11 J0 = tensor(2, {"0", "-1", "1", "0"}, kX2);
  const auto wj = omega_L(C, J0);
  Mat Jm(2, 2);
  Jm << 0, -1, 1, 0;
  Mat oracle = Mat::Zero(4, 4);
  for (int k = 0; k <= 64; ++k) {
    const double t = k / 64.0;
    const double wgt = (k == 0 || k == 64) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    Mat Phi = Mat::Identity(4, 4);
    Phi(0, 3) = -t;
    Phi(1, 2) = t;
    Mat F = Mat::Identity(4, 4);
    F.bottomRightCorner(2, 2) = Jm;
    Mat O0 = Mat::Zero(4, 4);
    O0.topRightCorner(2, 2).setIdentity();
    O0.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
    const Mat M = F * Phi;
    oracle += wgt / (3.0 * 64.0) * (M.transpose() * O0 * M);
  }
  for (int i = 0; i < 5; ++i) {
    const Vec g = sample_validity(*C.G, rng);
    CHECK((wj->omega(g).to_matrix() - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("torsion of diagonal tensors") {
  const Vec x = Vec::Ones(2);
  const Vec e1 = Vec::Unit(2, 0), e2 = Vec::Unit(2, 1);
  // Each diagonal entry depends only on its own coordinate: torsion-free.
  CHECK(nijenhuis_torsion(tensor(2, {"x1", "0", "0", "x2"}, kX2), as_span(x), e1, e2).norm() < 1e-14);
  CHECK(nijenhuis_torsion(tensor(2, {"0", "1", "-1", "0"}, kX2), as_span(x), e1, e2).norm() < 1e-14);
  const Vec y = (Vec(2) << 2.0, 1.0).finished();
  const Vec T = nijenhuis_torsion(tensor(2, {"x2", "0", "0", "x1"}, kX2), as_span(y), e1, e2);
  CHECK(T[0] == doctest::Approx(-1.0));
  CHECK(T[1] == doctest::Approx(-1.0));
}
