#include "mulform/imform.hpp"

#include <cmath>

#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace mulform {

namespace {

FormField zero_form(int n, int k) { return k <= n ? FormField(n, k) : FormField(); }

Mat base_inclusion(int n, int d) {
  Mat J = Mat::Zero(d, n);
  J.topRows(n).setIdentity();
  return J;
}

}  // namespace

IMFormData IMFormData::zero(int k, int n, int r) {
  IMFormData d;
  d.k = k;
  d.n = n;
  d.r = r;
  d.l.assign(static_cast<std::size_t>(r), FormField(n, k - 1));
  d.nu.assign(static_cast<std::size_t>(r), zero_form(n, k));
  return d;
}

SpencerData IMFormData::spencer() const {
  SpencerData s;
  s.k = k;
  s.n = n;
  s.r = r;
  s.l = l;
  for (int j = 0; j < r; ++j) {
    const auto J = static_cast<std::size_t>(j);
    FormField D = k <= n ? exterior_derivative(l[J]) : FormField();
    if (nu[J].size() > 0) D += nu[J];
    s.D.push_back(D);
  }
  return s;
}

FormField lift(const FormField& base, int total_dim) {
  if (total_dim < base.dim()) throw ShapeError("lift: target dimension too small");
  FormField out(total_dim, base.degree());
  const auto& tab = multi_indices(base.dim(), base.degree());
  for (std::size_t p = 0; p < tab.masks.size(); ++p) out.at_mask(tab.masks[p]) = base.at(p);
  return out;
}

LinearForm linear_form(const SpencerData& s) {
  if (s.k < 1) throw ShapeError("linear forms need degree >= 1");
  if (static_cast<int>(s.l.size()) != s.r || static_cast<int>(s.D.size()) != s.r)
    throw ShapeError("Spencer data: one (l, D) per frame section expected");
  const int d = s.n + s.r;
  LinearForm L;
  L.n = s.n;
  L.r = s.r;
  L.form = FormField(d, s.k);
  for (int j = 0; j < s.r; ++j) {
    const auto J = static_cast<std::size_t>(j);
    const Expr y = Expr::variable(s.n + j);
    if (s.D[J].size() > 0) L.form += y * lift(s.D[J], d);
    L.form += wedge(FormField::monomial(d, Expr(1.0), {s.n + j}), lift(s.l[J], d));
  }
  return L;
}

LinearForm linear_form(const IMFormData& d) { return linear_form(d.spencer()); }

RecoveredSpencer recover(const LinearForm& L, std::span<const double> x) {
  const int d = L.total_dim();
  if (static_cast<int>(x.size()) < L.n) throw ShapeError("recover: base point too short");
  const Mat inc = base_inclusion(L.n, d);
  RecoveredSpencer out;
  Vec p = Vec::Zero(d);
  for (int i = 0; i < L.n; ++i) p[i] = x[static_cast<std::size_t>(i)];
  const AltTensor at_zero = L.form.eval(as_span(p));
  for (int j = 0; j < L.r; ++j) {
    out.l.push_back(pullback(interior(Vec::Unit(d, L.n + j), at_zero), inc));
    Vec q = p;
    q[L.n + j] = 1.0;
    out.D.push_back(pullback(L.form.eval(as_span(q)), inc));
  }
  return out;
}

IMFormData d_IM(const IMFormData& d) {
  IMFormData out = IMFormData::zero(d.k + 1, d.n, d.r);
  for (int j = 0; j < d.r; ++j) {
    const auto J = static_cast<std::size_t>(j);
    if (d.nu[J].size() > 0) out.l[J] = d.nu[J];
  }
  return out;
}

IMFormData canonical_poisson_pair(int n) {
  IMFormData d = IMFormData::zero(2, n, n);
  for (int j = 0; j < n; ++j) d.l[static_cast<std::size_t>(j)] = FormField::monomial(n, Expr(-1.0), {j});
  return d;
}

IMFormData exact_pair(const AlgebroidChart& A, const FormField& varpi) {
  if (varpi.dim() != A.n) throw ShapeError("exact_pair: form dimension differs from the base");
  const int k = varpi.degree();
  if (k < 1) throw ShapeError("exact_pair: degree must be at least 1");
  IMFormData d = IMFormData::zero(k, A.n, A.r);
  const FormField dvarpi = k < A.n ? exterior_derivative(varpi) : FormField();
  for (int a = 0; a < A.r; ++a) {
    const VectorField rho = A.anchor_field(a);
    d.l[static_cast<std::size_t>(a)] = interior(rho, varpi);
    if (dvarpi.size() > 0) d.nu[static_cast<std::size_t>(a)] = interior(rho, dvarpi);
  }
  return d;
}

IMFormData dirac_pair(const AlgebroidChart& A) {
  if (!A.dirac) throw ShapeError("dirac_pair needs a Dirac chart");
  IMFormData d = IMFormData::zero(2, A.n, A.r);
  for (int i = 0; i < A.r; ++i) {
    const auto I = static_cast<std::size_t>(i);
    d.l[I] = -A.dirac->alpha[I];
    if (A.dirac->has_H()) d.nu[I] = interior(A.dirac->v[I], A.dirac->H);
  }
  return d;
}

SpencerData jacobi_spencer(int n) {
  SpencerData s;
  s.k = 1;
  s.n = n;
  s.r = n + 1;
  s.l.push_back(FormField::scalar(n, Expr(1.0)));
  s.D.push_back(FormField(n, 1));
  for (int i = 0; i < n; ++i) {
    s.l.push_back(FormField::scalar(n, Expr(0.0)));
    s.D.push_back(FormField::monomial(n, Expr(-1.0), {i}));
  }
  return s;
}

LinearForm jacobi_linear_form(int n) { return linear_form(jacobi_spencer(n)); }

CheckReport im_residuals(const AlgebroidChart& A, const IMFormData& d, int samples, std::uint64_t seed, double tol) {
  if (d.n != A.n || d.r != A.r) throw ShapeError("im_residuals: IM data does not match the algebroid");
  const int r = A.r;
  const int k = d.k;
  std::vector<VectorField> rho;
  for (int a = 0; a < r; ++a) rho.push_back(A.anchor_field(a));
  const bool has_nu = k <= A.n;
  std::vector<FormField> dnu, dl;
  for (int a = 0; a < r; ++a) {
    const auto I = static_cast<std::size_t>(a);
    dl.push_back(k <= A.n ? exterior_derivative(d.l[I]) : FormField());
    dnu.push_back(has_nu && k < A.n ? exterior_derivative(d.nu[I]) : FormField());
  }
  // Right-hand sides of the IM equations as flat expression lists per pair (a, b):
  // [ν-equation | l-equation | symmetry], each evaluated alongside ν and l values.
  const std::size_t nk = has_nu ? static_cast<std::size_t>(binomial(A.n, k)) : 0;
  const std::size_t nl = static_cast<std::size_t>(binomial(A.n, k - 1));
  const std::size_t ns = k >= 2 ? static_cast<std::size_t>(binomial(A.n, k - 2)) : 0;
  std::vector<Expr> exprs;
  for (int a = 0; a < r; ++a) {
    const auto I = static_cast<std::size_t>(a);
    for (std::size_t p = 0; p < nk; ++p) exprs.push_back(d.nu[I].at(p));
    for (std::size_t p = 0; p < nl; ++p) exprs.push_back(d.l[I].at(p));
  }
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      const auto Ia = static_cast<std::size_t>(a);
      const auto Ib = static_cast<std::size_t>(b);
      if (has_nu) {
        FormField rhs = lie_derivative(rho[Ia], d.nu[Ib]);
        if (dnu[Ia].size() > 0) rhs -= interior(rho[Ib], dnu[Ia]);
        for (std::size_t p = 0; p < nk; ++p) exprs.push_back(rhs.at(p));
      }
      FormField rl = lie_derivative(rho[Ia], d.l[Ib]);
      if (dl[Ia].size() > 0) rl -= interior(rho[Ib], dl[Ia]);
      if (has_nu) rl -= interior(rho[Ib], d.nu[Ia]);
      for (std::size_t p = 0; p < nl; ++p) exprs.push_back(rl.at(p));
      if (k >= 2) {
        const FormField s = interior(rho[Ia], d.l[Ib]) + interior(rho[Ib], d.l[Ia]);
        for (std::size_t p = 0; p < ns; ++p) exprs.push_back(s.at(p));
      }
    }
  const Program prog(exprs);
  const std::size_t per_section = nk + nl;
  const std::size_t per_pair = nk + nl + ns;

  struct PointResult {
    std::vector<double> x;
    double nu = 0, l = 0, sym = 0;
  };
  std::vector<PointResult> results(static_cast<std::size_t>(samples));
  const SplitMix64 root(seed);
  parallel_for(results.size(), [&](std::size_t s) {
    SplitMix64 rng = root.fork(s);
    const Vec xv = sample_point(A.box, rng);
    PointResult& out = results[s];
    out.x = as_vector(xv);
    std::vector<double> v(prog.output_count()), c;
    prog.run(as_span(xv), v);
    A.structure->eval(as_span(xv), c);
    const double* sec = v.data();
    const double* pairs = v.data() + per_section * static_cast<std::size_t>(r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        const double* row = pairs + static_cast<std::size_t>(a * r + b) * per_pair;
        for (std::size_t p = 0; p < nk; ++p) {
          double lhs = 0;
          for (int m = 0; m < r; ++m)
            lhs += c[static_cast<std::size_t>((a * r + b) * r + m)] * sec[static_cast<std::size_t>(m) * per_section + p];
          out.nu = std::max(out.nu, std::abs(lhs - row[p]));
        }
        for (std::size_t p = 0; p < nl; ++p) {
          double lhs = 0;
          for (int m = 0; m < r; ++m)
            lhs += c[static_cast<std::size_t>((a * r + b) * r + m)] *
                   sec[static_cast<std::size_t>(m) * per_section + nk + p];
          out.l = std::max(out.l, std::abs(lhs - row[nk + p]));
        }
        for (std::size_t p = 0; p < ns; ++p) out.sym = std::max(out.sym, std::abs(row[nk + nl + p]));
      }
  });
  WorstCase nu, l, sym;
  for (const auto& p : results) {
    nu.update(p.nu, p.x);
    l.update(p.l, p.x);
    sym.update(p.sym, p.x);
  }
  CheckReport rep;
  rep.add("im_nu_equation", nu.value, tol, nu.point);
  rep.add("im_l_equation", l.value, tol, l.point);
  rep.add("im_symmetry", sym.value, tol, sym.point);
  return rep;
}

int fiber_degree(const Expr& e, int n) {
  auto combine_sum = [](int a, int b) {
    if (a == kAnyDegree) return b;
    if (b == kAnyDegree) return a;
    return a == b ? a : kNotHomogeneous;
  };
  switch (e.op()) {
    case Op::Const:
      return e.is_zero() ? kAnyDegree : 0;
    case Op::Var:
      return e.variable_index() >= n ? 1 : 0;
    case Op::Add:
    case Op::Sub:
      return combine_sum(fiber_degree(e.lhs(), n), fiber_degree(e.rhs(), n));
    case Op::Mul: {
      const int a = fiber_degree(e.lhs(), n);
      const int b = fiber_degree(e.rhs(), n);
      if (a == kAnyDegree || b == kAnyDegree) return kAnyDegree;
      if (a == kNotHomogeneous || b == kNotHomogeneous) return kNotHomogeneous;
      return a + b;
    }
    case Op::Div: {
      const int a = fiber_degree(e.lhs(), n);
      const int b = fiber_degree(e.rhs(), n);
      if (a == kAnyDegree) return kAnyDegree;
      if (a == kNotHomogeneous || b == kNotHomogeneous || b == kAnyDegree) return kNotHomogeneous;
      return a - b;
    }
    case Op::Neg:
      return fiber_degree(e.lhs(), n);
    case Op::Pow: {
      const int a = fiber_degree(e.lhs(), n);
      if (a == kAnyDegree || a == kNotHomogeneous) return a;
      return a * e.exponent();
    }
    default: {
      const int a = fiber_degree(e.lhs(), n);
      return a == 0 || a == kAnyDegree ? 0 : kNotHomogeneous;
    }
  }
}

CheckReport linear_form_checks(const LinearForm& L, const SpencerData* source, const Box& box, int samples,
                               std::uint64_t seed, double fiber_radius) {
  const int n = L.n;
  const int r = L.r;
  const int d = L.total_dim();
  CheckReport rep;

  // Components on dx^I carry fiber degree 1, on dy^j ∧ dx^I degree 0, none with two dy's.
  int violations = 0;
  const auto& tab = multi_indices(d, L.degree());
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    const Expr& e = L.form.at(p);
    if (e.is_zero()) continue;
    const int fiber_slots = popcount(tab.masks[p] >> n);
    const int deg = fiber_degree(e, n);
    if (fiber_slots >= 2 || (deg != kAnyDegree && deg != 1 - fiber_slots)) ++violations;
  }
  rep.add("fiber_degree", violations, 0.5, {}, "count of components with the wrong fiber degree");

  const Box base = box.dim() == 0 ? Box::unbounded(n) : box;
  const Mat inc = base_inclusion(n, d);
  struct PointResult {
    std::vector<double> x;
    double scaling = 0, recovery = 0, leibniz = 0;
  };
  std::vector<PointResult> results(static_cast<std::size_t>(samples));
  const SplitMix64 root(seed);
  parallel_for(results.size(), [&](std::size_t s) {
    SplitMix64 rng = root.fork(s);
    const Vec a = sample_total(base, r, fiber_radius, rng);
    PointResult& out = results[s];
    out.x = as_vector(a);
    const AltTensor La = L.form.eval(as_span(a));
    for (double t : {0.5, 2.0}) {
      Vec ta = a;
      ta.tail(r) *= t;
      Mat dm = Mat::Identity(d, d);
      dm.bottomRightCorner(r, r) *= t;
      out.scaling = std::max(out.scaling, (pullback(L.form.eval(as_span(ta)), dm) - t * La).max_abs());
    }
    const std::span<const double> x(a.data(), static_cast<std::size_t>(n));
    const RecoveredSpencer rec = recover(L, x);
    if (source) {
      for (int j = 0; j < r; ++j) {
        const auto J = static_cast<std::size_t>(j);
        out.recovery = std::max(out.recovery, (rec.l[J] - source->l[J].eval(x)).max_abs());
        out.recovery = std::max(out.recovery, (rec.D[J] - source->D[J].eval(x)).max_abs());
      }
    }
    // D(x_l e_j) = x_l D(e_j) + dx_l ∧ l(e_j), with D(s) = s^*Λ.
    for (int j = 0; j < r; ++j)
      for (int l = 0; l < n; ++l) {
        Vec q = Vec::Zero(d);
        q.head(n) = a.head(n);
        q[n + j] = a[l];
        Mat ds = inc;
        ds(n + j, l) = 1.0;
        const AltTensor lhs = pullback(L.form.eval(as_span(q)), ds);
        const auto J = static_cast<std::size_t>(j);
        AltTensor rhs = a[l] * rec.D[J];
        rhs += wedge(AltTensor::basis(n, {l}), rec.l[J]);
        out.leibniz = std::max(out.leibniz, (lhs - rhs).max_abs());
      }
  });
  WorstCase scaling, recovery, leibniz;
  for (const auto& p : results) {
    scaling.update(p.scaling, p.x);
    recovery.update(p.recovery, p.x);
    leibniz.update(p.leibniz, p.x);
  }
  rep.add("linear_scaling", scaling.value, 1e-10, scaling.point);
  if (source)
    rep.add("recovery_round_trip", recovery.value, 1e-10, recovery.point);
  else
    rep.add_skipped("recovery_round_trip", "no source data supplied");
  rep.add("spencer_leibniz", leibniz.value, 1e-10, leibniz.point);
  return rep;
}

}  // namespace mulform
