#include "mulform/algebroid.hpp"

#include <cmath>

#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace mulform {

// ---------------------------------------------------------------------------
// Symbolic structure functions

ExprStructureFunctions::ExprStructureFunctions(int base_dim, int rank, std::vector<Expr> upper)
    : StructureFunctions(base_dim, rank) {
  const auto r = static_cast<std::size_t>(rank);
  if (upper.size() != r * r * r) throw ShapeError("structure functions: expected r^3 entries");
  c_.assign(r * r * r, Expr());
  for (int a = 0; a < rank; ++a)
    for (int b = a + 1; b < rank; ++b)
      for (int k = 0; k < rank; ++k) {
        const Expr& e = upper[static_cast<std::size_t>((a * rank + b) * rank + k)];
        if (e.max_variable() >= base_dim) throw ShapeError("structure function depends on a fiber variable");
        c_[static_cast<std::size_t>((a * rank + b) * rank + k)] = e;
        c_[static_cast<std::size_t>((b * rank + a) * rank + k)] = -e;
      }
  value_ = Program(c_);
  std::vector<Expr> grad;
  for (int l = 0; l < base_dim; ++l)
    for (const Expr& e : c_) grad.push_back(partial(e, l));
  gradient_ = Program(grad);
}

void ExprStructureFunctions::eval(std::span<const double> x, std::vector<double>& c) const {
  c.resize(c_.size());
  value_.run(x, c);
}

void ExprStructureFunctions::eval_gradient(std::span<const double> x, std::vector<double>& c,
                                           std::vector<double>& dc) const {
  eval(x, c);
  dc.resize(c_.size() * static_cast<std::size_t>(base_dim()));
  gradient_.run(x, dc);
}

// ---------------------------------------------------------------------------
// Dirac frames

bool DiracFrame::has_H() const { return H.degree() == 3 && !H.is_zero(); }

namespace {

struct Section {
  VectorField v;
  FormField alpha;
};

Section courant(const Section& a, const Section& b, const DiracFrame& f) {
  const int n = a.v.dim();
  Section out{VectorField::zero(n), FormField(n, 1)};
  for (int m = 0; m < n; ++m) {
    Expr s;
    for (int l = 0; l < n; ++l) s += a.v[l] * partial(b.v[m], l) - b.v[l] * partial(a.v[m], l);
    out.v[m] = s;
  }
  out.alpha = lie_derivative(a.v, b.alpha) - interior(b.v, exterior_derivative(a.alpha));
  if (f.has_H()) out.alpha += interior(b.v, interior(a.v, f.H));
  return out;
}

Section frame_section(const DiracFrame& f, int i) {
  return Section{f.v[static_cast<std::size_t>(i)], f.alpha[static_cast<std::size_t>(i)]};
}

void append(std::vector<Expr>& out, const Section& s) {
  for (int m = 0; m < s.v.dim(); ++m) out.push_back(s.v[m]);
  for (int m = 0; m < s.v.dim(); ++m) out.push_back(s.alpha.at(static_cast<std::size_t>(m)));
}

}  // namespace

DiracStructureFunctions::DiracStructureFunctions(std::shared_ptr<const DiracFrame> frame)
    : StructureFunctions(frame->base_dim(), frame->rank()), frame_(std::move(frame)) {
  const DiracFrame& f = *frame_;
  const int n = f.base_dim();
  const int r = f.rank();
  if (static_cast<int>(f.alpha.size()) != r) throw ShapeError("Dirac frame: vector and form parts differ in count");
  for (int i = 0; i < r; ++i) {
    if (f.v[static_cast<std::size_t>(i)].dim() != n || f.alpha[static_cast<std::size_t>(i)].dim() != n ||
        f.alpha[static_cast<std::size_t>(i)].degree() != 1)
      throw ShapeError("Dirac frame: section shape mismatch");
  }
  std::vector<Expr> E, B, L, P;
  for (int i = 0; i < r; ++i) append(E, frame_section(f, i));
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      if (a == b) {
        for (int m = 0; m < 2 * n; ++m) B.emplace_back();
        continue;
      }
      append(B, courant(frame_section(f, a), frame_section(f, b), f));
    }
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      Section eb = frame_section(f, b);
      Section ea = frame_section(f, a);
      const Section base = courant(ea, eb, f);
      for (int l = 0; l < n; ++l) {
        const Expr xl = Expr::variable(l);
        Section scaled{VectorField::zero(n), Expr(xl) * eb.alpha};
        for (int m = 0; m < n; ++m) scaled.v[m] = xl * eb.v[m];
        const Section lhs = courant(ea, scaled, f);
        // ⟦e_a, x_l e_b⟧ - x_l ⟦e_a, e_b⟧ - v_a^l e_b
        for (int m = 0; m < n; ++m) L.push_back(lhs.v[m] - xl * base.v[m] - ea.v[l] * eb.v[m]);
        for (int m = 0; m < n; ++m)
          L.push_back(lhs.alpha.at(static_cast<std::size_t>(m)) - xl * base.alpha.at(static_cast<std::size_t>(m)) -
                      ea.v[l] * eb.alpha.at(static_cast<std::size_t>(m)));
      }
    }
  for (int a = 0; a < r; ++a)
    for (int b = a; b < r; ++b) {
      Expr s;
      for (int m = 0; m < n; ++m) {
        s += f.alpha[static_cast<std::size_t>(a)].at(static_cast<std::size_t>(m)) * f.v[static_cast<std::size_t>(b)][m];
        s += f.alpha[static_cast<std::size_t>(b)].at(static_cast<std::size_t>(m)) * f.v[static_cast<std::size_t>(a)][m];
      }
      P.push_back(s);
    }
  std::vector<Expr> dE, dB;
  for (int l = 0; l < n; ++l) {
    for (const Expr& e : E) dE.push_back(partial(e, l));
    for (const Expr& e : B) dB.push_back(partial(e, l));
  }
  frame_prog_ = Program(E);
  bracket_prog_ = Program(B);
  frame_grad_prog_ = Program(dE);
  bracket_grad_prog_ = Program(dB);
  leibniz_prog_ = Program(L);
  pairing_prog_ = Program(P);
}

void DiracStructureFunctions::solve(std::span<const double> x, std::vector<double>& c, Mat* E_out,
                                    std::vector<Vec>* B_out) const {
  const int n = base_dim();
  const int r = rank();
  const int rows = 2 * n;
  std::vector<double> e(static_cast<std::size_t>(rows * r));
  std::vector<double> b(static_cast<std::size_t>(rows * r * r));
  frame_prog_.run(x, e);
  bracket_prog_.run(x, b);
  Mat E(rows, r);
  for (int i = 0; i < r; ++i)
    for (int m = 0; m < rows; ++m) E(m, i) = e[static_cast<std::size_t>(i * rows + m)];
  Eigen::ColPivHouseholderQR<Mat> qr(E);
  c.assign(static_cast<std::size_t>(r * r * r), 0.0);
  if (B_out) B_out->assign(static_cast<std::size_t>(r * r), Vec::Zero(rows));
  for (int a = 0; a < r; ++a)
    for (int bb = 0; bb < r; ++bb) {
      if (a == bb) continue;
      Vec rhs(rows);
      for (int m = 0; m < rows; ++m) rhs[m] = b[static_cast<std::size_t>((a * r + bb) * rows + m)];
      const Vec sol = qr.solve(rhs);
      for (int k = 0; k < r; ++k) c[static_cast<std::size_t>((a * r + bb) * r + k)] = sol[k];
      if (B_out) (*B_out)[static_cast<std::size_t>(a * r + bb)] = rhs;
    }
  if (E_out) *E_out = E;
}

void DiracStructureFunctions::eval(std::span<const double> x, std::vector<double>& c) const {
  solve(x, c, nullptr, nullptr);
}

void DiracStructureFunctions::eval_gradient(std::span<const double> x, std::vector<double>& c,
                                            std::vector<double>& dc) const {
  const int n = base_dim();
  const int r = rank();
  const int rows = 2 * n;
  Mat E;
  solve(x, c, &E, nullptr);
  std::vector<double> de(static_cast<std::size_t>(n * rows * r));
  std::vector<double> db(static_cast<std::size_t>(n * rows * r * r));
  frame_grad_prog_.run(x, de);
  bracket_grad_prog_.run(x, db);
  Eigen::ColPivHouseholderQR<Mat> qr(E);
  const auto r3 = static_cast<std::size_t>(r * r * r);
  dc.assign(static_cast<std::size_t>(n) * r3, 0.0);
  for (int l = 0; l < n; ++l) {
    Mat dE(rows, r);
    for (int i = 0; i < r; ++i)
      for (int m = 0; m < rows; ++m) dE(m, i) = de[static_cast<std::size_t>(l * rows * r + i * rows + m)];
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        if (a == b) continue;
        Vec rhs(rows), cab(r);
        for (int m = 0; m < rows; ++m)
          rhs[m] = db[static_cast<std::size_t>(l * rows * r * r + (a * r + b) * rows + m)];
        for (int k = 0; k < r; ++k) cab[k] = c[static_cast<std::size_t>((a * r + b) * r + k)];
        const Vec d = qr.solve(rhs - dE * cab);
        for (int k = 0; k < r; ++k) dc[static_cast<std::size_t>(l) * r3 + static_cast<std::size_t>((a * r + b) * r + k)] = d[k];
      }
  }
}

double DiracStructureFunctions::involutivity_residual(std::span<const double> x) const {
  const int r = rank();
  std::vector<double> c;
  Mat E;
  std::vector<Vec> B;
  solve(x, c, &E, &B);
  double worst = 0.0;
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      if (a == b) continue;
      Vec cab(r);
      for (int k = 0; k < r; ++k) cab[k] = c[static_cast<std::size_t>((a * r + b) * r + k)];
      worst = std::max(worst, (E * cab - B[static_cast<std::size_t>(a * r + b)]).lpNorm<Eigen::Infinity>());
    }
  return worst;
}

double DiracStructureFunctions::lagrangian_residual(std::span<const double> x) const {
  std::vector<double> p(pairing_prog_.output_count());
  pairing_prog_.run(x, p);
  double worst = 0.0;
  for (double v : p) worst = std::max(worst, std::abs(v));
  return worst;
}

double DiracStructureFunctions::independence_margin(std::span<const double> x) const {
  const int rows = 2 * base_dim();
  const int r = rank();
  std::vector<double> e(static_cast<std::size_t>(rows * r));
  frame_prog_.run(x, e);
  Mat E(rows, r);
  for (int i = 0; i < r; ++i)
    for (int m = 0; m < rows; ++m) E(m, i) = e[static_cast<std::size_t>(i * rows + m)];
  return sigma_min(E);
}

double DiracStructureFunctions::leibniz_residual(std::span<const double> x) const {
  std::vector<double> v(leibniz_prog_.output_count());
  leibniz_prog_.run(x, v);
  double worst = 0.0;
  for (double a : v) worst = std::max(worst, std::abs(a));
  return worst;
}

// ---------------------------------------------------------------------------
// Charts and builders

VectorField AlgebroidChart::anchor_field(int a) const {
  VectorField v = VectorField::zero(n);
  for (int m = 0; m < n; ++m) v[m] = rho(m, a);
  return v;
}

Mat AlgebroidChart::anchor_matrix(std::span<const double> x) const {
  Mat m(n, r);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < r; ++a) m(i, a) = rho(i, a).eval(x);
  return m;
}

AlgebroidChart raw_algebroid(int n, int r, std::vector<Expr> anchor, std::vector<Expr> upper_structure, Box box) {
  if (n < 1 || r < 1 || n + r > kMaxDim) throw ShapeError("algebroid: unsupported dimensions");
  if (anchor.size() != static_cast<std::size_t>(n * r)) throw ShapeError("algebroid: anchor must be n x r");
  for (const Expr& e : anchor)
    if (e.max_variable() >= n) throw ShapeError("anchor depends on a fiber variable");
  if (box.dim() != 0 && box.dim() != n) throw ShapeError("algebroid: box dimension differs from base dimension");
  AlgebroidChart A;
  A.n = n;
  A.r = r;
  A.box = box.dim() == 0 ? Box::unbounded(n) : std::move(box);
  A.anchor = std::move(anchor);
  A.structure = std::make_shared<ExprStructureFunctions>(n, r, std::move(upper_structure));
  return A;
}

AlgebroidChart cotangent_algebroid(const BivectorField& pi, Box box) {
  const int n = pi.dim();
  std::vector<Expr> anchor(static_cast<std::size_t>(n * n));
  for (int m = 0; m < n; ++m)
    for (int i = 0; i < n; ++i) anchor[static_cast<std::size_t>(m * n + i)] = pi(i, m);
  std::vector<Expr> c(static_cast<std::size_t>(n * n * n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < n; ++k) c[static_cast<std::size_t>((i * n + j) * n + k)] = partial(pi(i, j), k);
  AlgebroidChart A = raw_algebroid(n, n, std::move(anchor), std::move(c), std::move(box));
  A.family = "cotangent";
  A.pi = pi;
  return A;
}

Vec sample_point(const Box& box, SplitMix64& rng) {
  Vec x(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    const double lo = std::isfinite(box.lo[i]) ? box.lo[i] : -1.0;
    const double hi = std::isfinite(box.hi[i]) ? box.hi[i] : 1.0;
    x[i] = rng.uniform(lo, hi);
  }
  return x;
}

Vec sample_total(const Box& box, int r, double radius, SplitMix64& rng) {
  Vec x(box.dim() + r);
  x.head(box.dim()) = sample_point(box, rng);
  for (int j = 0; j < r; ++j) x[box.dim() + j] = rng.uniform(-radius, radius);
  return x;
}

AlgebroidChart dirac_algebroid(std::shared_ptr<const DiracFrame> frame, Box box, int samples, std::uint64_t seed) {
  const int n = frame->base_dim();
  const int r = frame->rank();
  if (r != n) throw ShapeError("Dirac frame must have exactly n sections");
  if (frame->H.degree() == 3 && frame->H.dim() != n) throw ShapeError("Dirac: H has the wrong dimension");
  auto sf = std::make_shared<DiracStructureFunctions>(frame);
  if (box.dim() == 0) box = Box::unbounded(n);
  // No simplifier, so dH = 0 is checked by evaluation.
  const bool check_dH = frame->has_H() && n >= 4;
  const FormField dH = check_dH ? exterior_derivative(frame->H) : FormField();
  SplitMix64 rng(seed);
  WorstCase lag, invol, closed;
  BestCase indep;
  for (int s = 0; s < samples; ++s) {
    const Vec x = sample_point(box, rng);
    const auto at = as_vector(x);
    lag.update(sf->lagrangian_residual(as_span(x)), at);
    indep.update(sf->independence_margin(as_span(x)), at);
    if (check_dH) closed.update(dH.eval(as_span(x)).max_abs(), at);
  }
  if (!(closed.value < 1e-10)) throw PreconditionError("closed_H", "H is not closed", closed.value);
  if (!(lag.value < 1e-10)) throw PreconditionError("lagrangian", "sections are not isotropic for the pairing", lag.value);
  if (!(indep.value > 1e-8)) throw PreconditionError("independence", "sections are pointwise dependent", indep.value);
  SplitMix64 rng2(seed ^ 0x5bd1e995ULL);
  for (int s = 0; s < samples; ++s) {
    const Vec x = sample_point(box, rng2);
    invol.update(sf->involutivity_residual(as_span(x)), as_vector(x));
  }
  if (!(invol.value < 1e-8))
    throw PreconditionError("involutive", "frame is not closed under the Courant bracket", invol.value);

  AlgebroidChart A;
  A.n = n;
  A.r = r;
  A.box = std::move(box);
  A.anchor.resize(static_cast<std::size_t>(n * r));
  for (int m = 0; m < n; ++m)
    for (int a = 0; a < r; ++a) A.anchor[static_cast<std::size_t>(m * r + a)] = frame->v[static_cast<std::size_t>(a)][m];
  A.structure = sf;
  A.family = "dirac";
  A.dirac = std::move(frame);
  return A;
}

JacobiCompatibility jacobi_compatibility(const BivectorField& pi, const VectorField& R, std::span<const double> x) {
  JacobiCompatibility out;
  const AltTensor pp = schouten(pi, pi, x);
  const AltTensor rp = wedge(R, pi, x);
  if (pp.size() > 0) out.pi_pi = (pp - 2.0 * rp).max_abs();
  out.pi_R = schouten(pi, R, x).max_abs();
  return out;
}

AlgebroidChart jacobi_algebroid(const BivectorField& pi, const VectorField& R, Box box, int samples,
                                std::uint64_t seed, double tol) {
  const int n = pi.dim();
  if (R.dim() != n) throw ShapeError("Jacobi: R and π dimensions differ");
  if (box.dim() == 0) box = Box::unbounded(n);
  SplitMix64 rng(seed);
  WorstCase worst;
  for (int s = 0; s < samples; ++s) {
    const Vec x = sample_point(box, rng);
    const auto res = jacobi_compatibility(pi, R, as_span(x));
    worst.update(std::max(res.pi_pi, res.pi_R), as_vector(x));
  }
  if (!(worst.value < tol))
    throw PreconditionError("jacobi_compatibility", "[π,π] = 2R∧π and [π,R] = 0 fail", worst.value);

  const int r = n + 1;
  std::vector<Expr> anchor(static_cast<std::size_t>(n * r));
  for (int m = 0; m < n; ++m) {
    anchor[static_cast<std::size_t>(m * r)] = -R[m];
    for (int i = 0; i < n; ++i) anchor[static_cast<std::size_t>(m * r + 1 + i)] = pi(i, m);
  }
  // Structure functions of e_0 = j^1 1 and e_i = dx^i from [j^1 u, j^1 v] = j^1 {u, v}
  // with {u, v} = π(du, dv) + R(u) v - u R(v).
  std::vector<Expr> c(static_cast<std::size_t>(r * r * r));
  auto at = [&](int a, int b, int k) -> Expr& { return c[static_cast<std::size_t>((a * r + b) * r + k)]; };
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) at(0, 1 + j, 1 + k) = -partial(R[j], k);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      at(1 + i, 1 + j, 0) = -pi(i, j);
      for (int k = 0; k < n; ++k) {
        Expr e = partial(pi(i, j), k);
        if (j == k) e += R[i];
        if (i == k) e -= R[j];
        at(1 + i, 1 + j, 1 + k) = e;
      }
    }
  AlgebroidChart A = raw_algebroid(n, r, std::move(anchor), std::move(c), std::move(box));
  A.family = "jacobi";
  A.pi = pi;
  A.reeb = R;
  return A;
}

CheckReport check_algebroid(const AlgebroidChart& A, int samples, std::uint64_t seed) {
  const int n = A.n;
  const int r = A.r;
  std::vector<Expr> rho_all = A.anchor;
  for (int l = 0; l < n; ++l)
    for (const Expr& e : A.anchor) rho_all.push_back(partial(e, l));
  const Program rho_prog(rho_all);

  struct PointResult {
    std::vector<double> x;
    double antisym = 0, jacobi = 0, anchor = 0, leibniz = 0;
  };
  std::vector<PointResult> results(static_cast<std::size_t>(samples));
  const SplitMix64 root(seed);
  parallel_for(results.size(), [&](std::size_t s) {
    SplitMix64 rng = root.fork(s);
    const Vec xv = sample_point(A.box, rng);
    const std::span<const double> x = as_span(xv);
    PointResult& out = results[s];
    out.x = as_vector(xv);
    std::vector<double> c, dc, rr(rho_all.size());
    A.structure->eval_gradient(x, c, dc);
    rho_prog.run(x, rr);
    const auto R3 = static_cast<std::size_t>(r * r * r);
    auto C = [&](int a, int b, int k) { return c[static_cast<std::size_t>((a * r + b) * r + k)]; };
    auto dC = [&](int l, int a, int b, int k) {
      return dc[static_cast<std::size_t>(l) * R3 + static_cast<std::size_t>((a * r + b) * r + k)];
    };
    auto rho = [&](int m, int a) { return rr[static_cast<std::size_t>(m * r + a)]; };
    auto drho = [&](int l, int m, int a) { return rr[static_cast<std::size_t>((1 + l) * n * r + m * r + a)]; };
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b)
        for (int k = 0; k < r; ++k) out.antisym = std::max(out.antisym, std::abs(C(a, b, k) + C(b, a, k)));
    // ρ([e_a, e_b]) - [ρ e_a, ρ e_b]
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b)
        for (int m = 0; m < n; ++m) {
          double s = 0.0;
          for (int k = 0; k < r; ++k) s += C(a, b, k) * rho(m, k);
          for (int l = 0; l < n; ++l) s -= rho(l, a) * drho(l, m, b) - rho(l, b) * drho(l, m, a);
          out.anchor = std::max(out.anchor, std::abs(s));
        }
    // Σ_cyc [[e_a, e_b], e_c], using [f e_p, e_c] = f [e_p, e_c] - ρ(e_c)(f) e_p.
    auto term = [&](int a, int b, int cc, int m) {
      double s = 0.0;
      for (int p = 0; p < r; ++p) s += C(a, b, p) * C(p, cc, m);
      for (int l = 0; l < n; ++l) s -= rho(l, cc) * dC(l, a, b, m);
      return s;
    };
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b)
        for (int cc = b + 1; cc < r; ++cc)
          for (int m = 0; m < r; ++m)
            out.jacobi = std::max(out.jacobi, std::abs(term(a, b, cc, m) + term(b, cc, a, m) + term(cc, a, b, m)));
    out.leibniz = A.structure->leibniz_residual(x);
  });

  WorstCase antisym, jacobi, anchor, leibniz;
  for (const auto& p : results) {
    antisym.update(p.antisym, p.x);
    jacobi.update(p.jacobi, p.x);
    anchor.update(p.anchor, p.x);
    leibniz.update(p.leibniz, p.x);
  }
  CheckReport rep;
  rep.add("antisymmetry", antisym.value, 1e-9, antisym.point);
  rep.add("jacobi_identity", jacobi.value, 1e-9, jacobi.point);
  rep.add("anchor_morphism", anchor.value, 1e-9, anchor.point);
  rep.add("leibniz", leibniz.value, 1e-9, leibniz.point,
          A.family == "dirac" ? "Courant bracket of coordinate multiples" : "implied by the structure-function presentation");
  return rep;
}

Spray default_spray(const AlgebroidChart& A, const std::vector<Expr>* christoffel) {
  const int n = A.n;
  const int r = A.r;
  Spray V;
  V.n = n;
  V.r = r;
  V.components.assign(static_cast<std::size_t>(n + r), Expr());
  for (int m = 0; m < n; ++m) {
    Expr s;
    for (int a = 0; a < r; ++a) s += A.rho(m, a) * Expr::variable(n + a);
    V.components[static_cast<std::size_t>(m)] = s;
  }
  if (christoffel) {
    if (christoffel->size() != static_cast<std::size_t>(r * r * r)) throw ShapeError("Christoffel table must be r^3");
    for (int k = 0; k < r; ++k) {
      Expr s;
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) {
          const Expr& g = (*christoffel)[static_cast<std::size_t>((k * r + a) * r + b)];
          if (g.max_variable() >= n) throw ShapeError("Christoffel symbols must depend on x only");
          if (!g.is_zero()) s -= g * Expr::variable(n + a) * Expr::variable(n + b);
        }
      V.components[static_cast<std::size_t>(n + k)] = s;
    }
  }
  return V;
}

CheckReport check_spray(const Spray& V, const AlgebroidChart& A, int samples, std::uint64_t seed, double fiber_radius) {
  const int n = A.n;
  const int r = A.r;
  if (V.n != n || V.r != r) throw ShapeError("spray and algebroid dimensions differ");
  const VectorFieldEvaluator ev = V.evaluator();
  struct PointResult {
    std::vector<double> x;
    double anchor = 0, scaling = 0;
  };
  std::vector<PointResult> results(static_cast<std::size_t>(samples));
  const SplitMix64 root(seed);
  FlowOptions fo;
  fo.tol = 1e-12;
  parallel_for(results.size(), [&](std::size_t s) {
    SplitMix64 rng = root.fork(s);
    const Vec a = sample_total(A.box, r, fiber_radius, rng);
    PointResult& out = results[s];
    out.x = as_vector(a);
    Vec va;
    ev.value(a, va);
    const Mat rho = A.anchor_matrix(std::span<const double>(a.data(), static_cast<std::size_t>(n)));
    out.anchor = (va.head(n) - rho * a.tail(r)).lpNorm<Eigen::Infinity>();
    try {
      for (double t : {0.5, 2.0})
        for (double sv : {0.25, 0.5}) {
          Vec ta = a;
          ta.tail(r) *= t;
          const Vec lhs = flow(ev, ta, sv, fo);
          Vec rhs = flow(ev, a, sv * t, fo);
          rhs.tail(r) *= t;
          out.scaling = std::max(out.scaling, (lhs - rhs).lpNorm<Eigen::Infinity>());
        }
    } catch (const DomainExit&) {
      out.scaling = std::numeric_limits<double>::infinity();  // blow-up: not a spray
    } catch (const StepUnderflow&) {
      out.scaling = std::numeric_limits<double>::infinity();
    }
  });
  WorstCase anchor, scaling;
  for (const auto& p : results) {
    anchor.update(p.anchor, p.x);
    scaling.update(p.scaling, p.x);
  }
  CheckReport rep;
  rep.add("spray_anchor", anchor.value, 1e-12, anchor.point);
  rep.add("spray_scaling", scaling.value, 1e-8, scaling.point);
  return rep;
}

Expr jacobi_cocycle(const AlgebroidChart& A) {
  if (A.family != "jacobi") throw ShapeError("jacobi_cocycle needs a Jacobi chart");
  Expr s;
  for (int i = 0; i < A.n; ++i) s += A.reeb[i] * Expr::variable(A.n + 1 + i);
  return s;
}

std::vector<double> transport_weight(const Trajectory& traj) {
  std::vector<double> w(traj.t.size(), 1.0);
  if (!traj.has_accumulator) return w;
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::exp(-traj.s[j]);
  return w;
}

}  // namespace mulform
