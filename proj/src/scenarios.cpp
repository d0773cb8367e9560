#include "mulform/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace mulform {

namespace {

struct Sample {
  double value = 0.0;
  std::vector<double> point;
};

// Runs fn on `count` independent streams and reduces in index order, so the
// worst point does not depend on scheduling.
template <class Reduce>
Reduce sample_reduce(int count, std::uint64_t seed, std::uint64_t stream, const std::function<Sample(SplitMix64&)>& fn) {
  std::vector<Sample> out(static_cast<std::size_t>(std::max(count, 0)));
  const SplitMix64 root = SplitMix64(seed).fork(stream);
  parallel_for(out.size(), [&](std::size_t i) {
    SplitMix64 rng = root.fork(i);
    out[i] = fn(rng);
  });
  Reduce r;
  for (const auto& s : out) r.update(s.value, s.point);
  return r;
}

WorstCase sample_worst(int count, std::uint64_t seed, std::uint64_t stream, const std::function<Sample(SplitMix64&)>& fn) {
  return sample_reduce<WorstCase>(count, seed, stream, fn);
}

BestCase sample_best(int count, std::uint64_t seed, std::uint64_t stream, const std::function<Sample(SplitMix64&)>& fn) {
  return sample_reduce<BestCase>(count, seed, stream, fn);
}

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Box base_of(const Box& total, int n) { return Box{total.lo.head(n), total.hi.head(n)}; }

Vec sample_base(const SprayGroupoid& G, SplitMix64& rng) {
  return sample_point(base_of(G.validity_box(), G.n()), rng);
}

Vec random_vector(int d, SplitMix64& rng) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v;
}

Mat block_diag(const Mat& a, const Mat& b) {
  Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

// Slope window for the linearization ladder at a few points of the validity box.
void add_linearization(CheckReport& rep, const MultFormEvaluator& M, const ScenarioOptions& opt, std::uint64_t stream) {
  const SprayGroupoid& G = M.groupoid();
  SplitMix64 rng = SplitMix64(opt.seed).fork(stream);
  WorstCase worst;
  bool all_exact = true;
  for (int i = 0; i < 3; ++i) {
    Vec a = sample_validity(G, rng);
    // Keep the fiber part away from zero so the remainder is visible.
    for (int j = 0; j < G.r(); ++j)
      if (std::abs(a[G.n() + j]) < 0.1) a[G.n() + j] = 0.1;
    const LinearizationResult lin = linearization_check(M, a);
    if (lin.exact) continue;
    all_exact = false;
    worst.update(std::abs(lin.slope - 1.0), as_vector(a));
  }
  if (all_exact)
    rep.add("linearization_slope", 0.0, 0.2, {}, "remainder vanishes identically (linear flow data)");
  else
    rep.add("linearization_slope", worst.value, 0.2, worst.point, "|slope - 1| of the (1/t) m_t^* ladder");
}

// Realization, inversion and multiplication checks shared by the Poisson builder.
void poisson_checks(SymplecticGroupoid& S, const ScenarioOptions& opt) {
  const SprayGroupoid& G = *S.G;
  const MultFormEvaluator& M = *S.omega;
  const int n = G.n();
  const int d = G.dim();
  const std::uint64_t seed = opt.seed;
  CheckReport& rep = S.report;

  auto pi_sharp = [&](const Vec& x) { return Mat(S.pi.eval(as_span(x)).transpose()); };

  std::vector<Sample> src(static_cast<std::size_t>(opt.samples)), tgt(src.size()), inv(src.size());
  {
    const SplitMix64 root = SplitMix64(seed).fork(10);
    parallel_for(src.size(), [&](std::size_t i) {
      SplitMix64 rng = root.fork(i);
      const Vec g = sample_validity(G, rng);
      const Trajectory tr = G.compute_trajectory(g, M.grid());
      const AltTensor w = M.omega(tr);
      const Mat P = invert_2form(w);
      const Mat ds = G.source_jacobian();
      const Mat dt = G.target_jacobian(tr);
      const Vec tau = tr.x.back().head(n);
      src[i] = {max_abs(ds * P * ds.transpose() - pi_sharp(g.head(n))), as_vector(g)};
      tgt[i] = {max_abs(dt * P * dt.transpose() + pi_sharp(tau)), as_vector(g)};
      Vec gi = tr.x.back();
      gi.tail(n) *= -1.0;
      Mat di = tr.J.back();
      di.bottomRows(n) *= -1.0;
      const AltTensor wi = M.omega(G.compute_trajectory(gi, M.grid()));
      inv[i] = {(pullback(wi, di) + w).max_abs(), as_vector(g)};
    });
  }
  WorstCase ws, wt, wi;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ws.update(src[i].value, src[i].point);
    wt.update(tgt[i].value, tgt[i].point);
    wi.update(inv[i].value, inv[i].point);
  }
  rep.add("realization_source", ws.value, 1e-6, ws.point, "|dσ Π♯ dσ^T - π♯|");
  rep.add("realization_target", wt.value, 1e-6, wt.point, "|dτ Π♯ dτ^T + π♯|");
  rep.add("inversion", wi.value, 1e-6, wi.point, "|ι^*ω + ω|");

  const IMFormData pair = canonical_poisson_pair(n);
  const WorstCase units = sample_worst(opt.samples, seed, 11, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    std::vector<AltTensor> l;
    for (const auto& f : pair.l) l.push_back(f.eval(as_span(x)));
    const AltTensor pred = units_form_predictor(G.algebroid().anchor_matrix(as_span(x)), l, 2);
    return Sample{(M.omega(G.unit(x)) - pred).max_abs(), as_vector(x)};
  });
  rep.add("units_formula", units.value, 1e-8, units.point, "ω at units against <b|v> - <a|w> + π(a,b)");

  const WorstCase trip = sample_worst(opt.samples, seed, 12, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    return Sample{units_round_trip_residual(differentiate_at_units(M, x), pair, as_span(x)), as_vector(x)};
  });
  rep.add("im_round_trip", trip.value, 1e-8, trip.point, "differentiation at units recovers (-id, 0)");

  const WorstCase closed = sample_worst(opt.samples, seed, 13, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    return Sample{M.domega(G.compute_trajectory(g, M.grid())).max_abs(), as_vector(g)};
  });
  rep.add("domega_closed", closed.value, 1e-7, closed.point);
  const WorstCase fd = sample_worst(std::min(opt.samples, 10), seed, 14, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    auto f = [&](const Vec& h) { return M.omega(G.compute_trajectory(h, M.grid())); };
    return Sample{(fd_exterior_derivative(f, g) - M.domega(G.compute_trajectory(g, M.grid()))).max_abs(), as_vector(g)};
  });
  rep.add("domega_fd", fd.value, 1e-5, fd.point, "symbolic dω against finite differences of ω");

  add_linearization(rep, M, opt, 15);

  if (!opt.multiplication_checks) {
    rep.add_skipped("multiplicativity", "multiplication checks disabled");
    return;
  }

  // Exact cocycle δ = dh(ρ y) with h = x1, integrating to f = h∘τ - h∘σ.
  Expr delta;
  for (int i = 0; i < n; ++i) delta += G.algebroid().rho(0, i) * Expr::variable(n + i);
  const double radius = G.validity_box().hi[n];
  MultiplyOptions mopt;
  mopt.steps = opt.multiply_steps;
  auto composable_after = [&](const Vec& b, SplitMix64& rng) {
    Vec a = G.unit(G.target(b));
    for (int i = 0; i < n; ++i) a[n + i] = rng.uniform(-radius, radius);
    return a;
  };
  // Composable chains g_1, ..., g_m (τ(g_{i+1}) = σ(g_i)) with every base point in
  // the validity box, by rejection.
  const Box& vb = G.validity_box();
  auto chain = [&](SplitMix64& rng, int m) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<Vec> g{sample_validity(G, rng)};
      bool inside = true;
      while (inside && static_cast<int>(g.size()) < m) {
        const Vec t = G.target(g.back());
        for (int i = 0; i < n; ++i) inside = inside && t[i] >= vb.lo[i] && t[i] <= vb.hi[i];
        if (inside) g.push_back(composable_after(g.back(), rng));
      }
      if (inside) return g;
    }
    throw DomainError("no composable samples inside the validity box");
  };

  struct PairResult {
    std::vector<double> point;
    double mult = 0, cocycle = 0, exact = 0, unit = 0;
  };
  std::vector<PairResult> pairs(static_cast<std::size_t>(opt.pair_samples));
  const SplitMix64 proot = SplitMix64(seed).fork(16);
  parallel_for(pairs.size(), [&](std::size_t s) {
    SplitMix64 rng = proot.fork(s);
    const std::vector<Vec> ch = chain(rng, 2);
    const Vec& b = ch[0];
    const Vec& a = ch[1];
    const Vec ab = multiply_poisson(M, a, b, mopt);
    PairResult& out = pairs[s];
    out.point = as_vector(a);
    out.point.insert(out.point.end(), b.data(), b.data() + d);

    // Composable tangent pairs along exact composable curves.
    const Mat dt = G.target_jacobian(G.compute_trajectory(b, M.grid()));
    Mat tmu(d, 2), ta(d, 2), tb(d, 2);
    for (int c = 0; c < 2; ++c) {
      const Vec w = random_vector(d, rng);
      const Vec vy = random_vector(n, rng);
      auto curve = [&](const Vec& hv) {
        const Vec bh = b + hv[0] * w;
        Vec ah = G.unit(G.target(bh));
        ah.tail(n) = a.tail(n) + hv[0] * vy;
        Mat m(d, 1);
        m.col(0) = multiply_poisson(M, ah, bh, mopt);
        return m;
      };
      tmu.col(c) = fd_directional(curve, Vec::Zero(1), Vec::Ones(1), 1e-4).col(0);
      ta.col(c) << dt * w, vy;
      tb.col(c) = w;
    }
    out.mult = std::abs(M.eval_omega(ab, tmu) - M.eval_omega(a, ta) - M.eval_omega(b, tb));

    const QuadratureRule& rule = M.rule();
    const double fa = integrate_cocycle(G, delta, a, rule);
    const double fb = integrate_cocycle(G, delta, b, rule);
    const double fab = integrate_cocycle(G, delta, ab, rule);
    out.cocycle = std::abs(fab - fa - fb);
    out.exact = std::abs(fa - (G.target(a)[0] - a[0]));
    if (s < 10) {
      out.unit = std::max((multiply_poisson(M, G.unit(G.target(b)), b, mopt) - b).lpNorm<Eigen::Infinity>(),
                          (multiply_poisson(M, a, G.unit(a.head(n)), mopt) - a).lpNorm<Eigen::Infinity>());
    }
  });
  WorstCase wm, wc, we, wu;
  for (const auto& p : pairs) {
    wm.update(p.mult, p.point);
    wc.update(p.cocycle, p.point);
    we.update(p.exact, p.point);
    wu.update(p.unit, p.point);
  }
  rep.add("unit_laws", wu.value, 1e-8, wu.point, "μ(u(τ b), b) = b and μ(a, u(σ a)) = a");
  rep.add("multiplicativity", wm.value, 1e-6, wm.point, "|μ^*ω - pr1^*ω - pr2^*ω| on composable tangent pairs");
  rep.add("cocycle_additivity", wc.value, 1e-6, wc.point, "f(ab) - f(a) - f(b) for δ = dx1∘ρ");
  rep.add("cocycle_exactness", we.value, 1e-8, we.point, "f = x1∘τ - x1∘σ");

  std::vector<Sample> triples(static_cast<std::size_t>(opt.triple_samples)), gaps(triples.size());
  const SplitMix64 troot = SplitMix64(seed).fork(17);
  parallel_for(triples.size(), [&](std::size_t s) {
    SplitMix64 rng = troot.fork(s);
    const std::vector<Vec> ch = chain(rng, 3);
    const Vec& c = ch[0];
    const Vec& b = ch[1];
    const Vec& a = ch[2];
    const Vec bc = multiply_poisson(M, b, c, mopt);
    const Vec ab = multiply_poisson(M, a, b, mopt);
    // τ(bc) = τ(b) only up to the discretization of μ; the gap is reported separately.
    MultiplyOptions loose = mopt;
    loose.composability_tol = std::numeric_limits<double>::infinity();
    const Vec left = multiply_poisson(M, ab, c, mopt);
    const Vec right = multiply_poisson(M, a, bc, loose);
    std::vector<double> pt = as_vector(a);
    pt.insert(pt.end(), c.data(), c.data() + d);
    triples[s] = {(left - right).lpNorm<Eigen::Infinity>(), pt};
    gaps[s] = {(G.target(bc) - a.head(n)).lpNorm<Eigen::Infinity>(), pt};
  });
  WorstCase wa, wg;
  for (std::size_t s = 0; s < triples.size(); ++s) {
    wa.update(triples[s].value, triples[s].point);
    wg.update(gaps[s].value, gaps[s].point);
  }
  rep.add("associativity", wa.value, 1e-6, wa.point, "|μ(μ(a,b),c) - μ(a,μ(b,c))|");
  rep.add("target_of_product", wg.value, 1e-6, wg.point, "|τ(bc) - τ(b)|");
}

}  // namespace

QuadratureRule ScenarioOptions::rule() const {
  return quadrature == QuadratureKind::Simpson ? QuadratureRule::simpson(quadrature_n)
                                               : QuadratureRule::gauss_legendre(quadrature_n);
}

Vec sample_validity(const SprayGroupoid& G, SplitMix64& rng) {
  if (G.validity_box().dim() == 0) return sample_total(G.algebroid().box, G.r(), 0.5, rng);
  return sample_point(G.validity_box(), rng);
}

// ---------------------------------------------------------------------------
// Poisson

Mat SymplecticGroupoid::Pi_sharp(const Vec& g) const { return invert_2form(omega->omega(g)); }

SymplecticGroupoid build_symplectic_groupoid(const BivectorField& pi, const Box& box, const ScenarioOptions& opt,
                                             bool run_checks) {
  SymplecticGroupoid S;
  S.pi = pi;
  const int n = pi.dim();
  const WorstCase pp = sample_worst(opt.samples, opt.seed, 1, [&](SplitMix64& rng) {
    const Vec x = sample_point(box, rng);
    return Sample{schouten(pi, pi, as_span(x)).max_abs(), as_vector(x)};
  });
  if (!(pp.value <= 1e-9)) throw PreconditionError("poisson_identity", "[π,π] does not vanish", pp.value);
  S.report.add("poisson_identity", pp.value, 1e-9, pp.point, "|[π,π]|");

  AlgebroidChart A = cotangent_algebroid(pi, box);
  Spray V = default_spray(A);
  S.G = std::make_shared<SprayGroupoid>(std::move(A), std::move(V), Expr(), opt.steps_per_unit);
  S.omega = std::make_shared<MultFormEvaluator>(S.G, linear_form(canonical_poisson_pair(n)), opt.rule());

  ValidityOptions vo;
  vo.fiber_radius = opt.fiber_radius;
  vo.base_fraction = opt.base_fraction;
  vo.seed = opt.seed;
  vo.accept = [&](const Vec& g) {
    return sigma_min(S.omega->omega(S.G->compute_trajectory(g, S.omega->grid())).to_matrix()) >= opt.nondegeneracy_min;
  };
  S.G->set_validity_box(discover_validity_box(*S.G, vo));

  const BestCase nd = sample_best(opt.samples, opt.seed, 2, [&](SplitMix64& rng) {
    const Vec g = sample_validity(*S.G, rng);
    return Sample{sigma_min(S.omega->omega(S.G->compute_trajectory(g, S.omega->grid())).to_matrix()), as_vector(g)};
  });
  S.report.add_margin("nondegeneracy_margin", nd.value, opt.nondegeneracy_min, nd.point, "min σ_min(ω)");
  if (run_checks) poisson_checks(S, opt);
  return S;
}

// ---------------------------------------------------------------------------
// Nijenhuis pairs

Mat TensorField11::eval(std::span<const double> x) const {
  Mat out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = (*this)(i, j).eval(x);
  return out;
}

TensorField11 TensorField11::identity(int n, double scale) {
  TensorField11 t{n, std::vector<Expr>(static_cast<std::size_t>(n * n))};
  for (int i = 0; i < n; ++i) t.m[static_cast<std::size_t>(i * n + i)] = Expr(scale);
  return t;
}

TensorField11 TensorField11::power(int k) const {
  TensorField11 out = identity(n);
  for (int p = 0; p < k; ++p) {
    TensorField11 next{n, std::vector<Expr>(static_cast<std::size_t>(n * n))};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Expr s;
        for (int m = 0; m < n; ++m) s += out(i, m) * (*this)(m, j);
        next.m[static_cast<std::size_t>(i * n + j)] = s;
      }
    out = std::move(next);
  }
  return out;
}

IMFormData nijenhuis_im_pair(const TensorField11& l) {
  IMFormData d = IMFormData::zero(2, l.n, l.n);
  for (int j = 0; j < l.n; ++j)
    for (int i = 0; i < l.n; ++i) d.l[static_cast<std::size_t>(j)].at_mask(Mask{1} << i) = -l(i, j);
  return d;
}

std::shared_ptr<MultFormEvaluator> omega_L(const SymplecticGroupoid& S, const TensorField11& l) {
  return std::make_shared<MultFormEvaluator>(S.G, linear_form(nijenhuis_im_pair(l)), S.omega->rule());
}

Mat L_tensor(const AltTensor& omega, const AltTensor& omega_l) { return -invert_2form(omega) * omega_l.to_matrix(); }

Vec nijenhuis_torsion(const TensorField11& l, std::span<const double> x, const Vec& u, const Vec& v) {
  const int n = l.n;
  const Mat N = l.eval(x).transpose();
  std::vector<Mat> dN;
  for (int m = 0; m < n; ++m) {
    Mat D(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) D(i, j) = partial(l(j, i), m).eval(x);
    dN.push_back(D);
  }
  auto along = [&](const Vec& w) {
    Mat D = Mat::Zero(n, n);
    for (int m = 0; m < n; ++m) D += w[m] * dN[static_cast<std::size_t>(m)];
    return D;
  };
  return along(N * u) * v - along(N * v) * u - N * (along(u) * v - along(v) * u);
}

Vec nijenhuis_torsion_fd(const std::function<Mat(const Vec&)>& A, const Vec& g, const Vec& u, const Vec& v, double h) {
  const Mat N = A(g);
  auto along = [&](const Vec& w) { return fd_directional(A, g, w, h); };
  return along(N * u) * v - along(N * v) * u - N * (along(u) * v - along(v) * u);
}

std::vector<AltTensor> torsion_im_values(const TensorField11& l, std::span<const double> x) {
  const int n = l.n;
  std::vector<AltTensor> out(static_cast<std::size_t>(n), AltTensor(n, 2));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const Vec T = nijenhuis_torsion(l, x, Vec::Unit(n, a), Vec::Unit(n, b));
      for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)].at_mask((Mask{1} << a) | (Mask{1} << b)) = -T[j];
    }
  return out;
}

namespace {

// π-symmetry and the IM cocycle condition of (-l, 0); false when either fails.
bool nijenhuis_prechecks(CheckReport& rep, const SymplecticGroupoid& S, const TensorField11& l,
                         const ScenarioOptions& opt, const NijenhuisOptions& nopt) {
  const SprayGroupoid& G = *S.G;
  const WorstCase sym = sample_worst(opt.samples, opt.seed, 20, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const Mat P = S.pi.eval(as_span(x));
    const Mat L = l.eval(as_span(x));
    return Sample{max_abs(L.transpose() * P - P * L), as_vector(x)};
  });
  rep.add("pi_symmetry", sym.value, nopt.symmetry_tol, sym.point, "π(l a, b) = π(a, l b)");
  const CheckReport im =
      im_residuals(G.algebroid(), nijenhuis_im_pair(l), opt.samples, opt.seed, nopt.cocycle_tol);
  rep.merge(im, "cocycle");
  return rep.find("pi_symmetry")->pass && im.passed();
}

struct FormPair {
  Mat omega;
  Mat omega_l;
};

FormPair forms_at(const SymplecticGroupoid& S, const MultFormEvaluator& ML, const Vec& g) {
  const Trajectory tr = S.G->compute_trajectory(g, S.omega->grid());
  return {S.omega->omega(tr).to_matrix(), ML.omega(tr).to_matrix()};
}

Mat L_of(const FormPair& f) { return f.omega.fullPivLu().solve(f.omega_l); }

// Ω_{A^k}(u, v) = Ω(A^k u, v), matrix (A^k)^T Ω.
Mat twisted(const FormPair& f, int k) {
  Mat Ak = Mat::Identity(f.omega.rows(), f.omega.cols());
  const Mat L = L_of(f);
  for (int i = 0; i < k; ++i) Ak = Ak * L;
  return Ak.transpose() * f.omega;
}

AltTensor as_form(const Mat& m) { return AltTensor::from_matrix(m); }

}  // namespace

CheckReport torsion_identity_check(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt,
                                   int samples) {
  const auto ML = omega_L(S, l);
  const SprayGroupoid& G = *S.G;
  const int d = G.dim();
  CheckReport rep;
  const WorstCase w = sample_worst(samples, opt.seed, 30, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    auto A = [&](const Vec& h) { return L_of(forms_at(S, *ML, h)); };
    auto omega_a2 = [&](const Vec& h) { return as_form(twisted(forms_at(S, *ML, h), 2)); };
    const Trajectory tr = G.compute_trajectory(g, S.omega->grid());
    const Mat Om = S.omega->omega(tr).to_matrix();
    const AltTensor dOm = S.omega->domega(tr);
    const AltTensor dOmA = ML->domega(tr);
    const AltTensor dOmA2 = fd_exterior_derivative(omega_a2, g);
    const Mat Ag = A(g);
    double worst = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        const Vec u = Vec::Unit(d, i), v = Vec::Unit(d, j);
        const Vec T = nijenhuis_torsion_fd(A, g, u, v);
        const Vec lhs = Om.transpose() * T;
        for (int k = 0; k < d; ++k) {
          const Vec e = Vec::Unit(d, k);
          auto eval3 = [&](const AltTensor& t, const Vec& x, const Vec& y) {
            Mat cols(d, 3);
            cols << x, y, e;
            return t.evaluate(cols);
          };
          const double rhs = eval3(dOmA, Ag * u, v) + eval3(dOmA, u, Ag * v) - eval3(dOm, Ag * u, Ag * v) -
                             eval3(dOmA2, u, v);
          worst = std::max(worst, std::abs(lhs[k] - rhs));
        }
      }
    return Sample{worst, as_vector(g)};
  });
  rep.add("torsion_identity", w.value, 1e-6, w.point, "i_{T_L(u,v)}ω against the dω, dω_L, dω_{L²} terms");
  return rep;
}

CheckReport nijenhuis_checks(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt,
                             const NijenhuisOptions& nopt) {
  CheckReport rep;
  if (!nijenhuis_prechecks(rep, S, l, opt, nopt)) {
    rep.add_skipped("nijenhuis", "prechecks failed");
    return rep;
  }
  const SprayGroupoid& G = *S.G;
  const int n = G.n();
  const auto ML = omega_L(S, l);
  const double tol = nopt.tol;

  const WorstCase units = sample_worst(opt.samples, opt.seed, 21, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const Mat lx = l.eval(as_span(x));
    return Sample{max_abs(L_of(forms_at(S, *ML, G.unit(x))) - block_diag(lx.transpose(), lx)), as_vector(x)};
  });
  rep.add("L_at_units", units.value, 1e-7, units.point, "L(v + a) = l(v) + l(a)");

  const WorstCase rel = sample_worst(opt.samples, opt.seed, 22, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const Mat ds = G.source_jacobian();
    const Mat L = L_of(forms_at(S, *ML, g));
    return Sample{max_abs(ds * L - l.eval(as_span(g)).transpose() * ds), as_vector(g)};
  });
  rep.add("sigma_related", rel.value, tol, rel.point, "dσ∘L = l∘dσ");

  const WorstCase push = sample_worst(opt.samples, opt.seed, 23, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const FormPair f = forms_at(S, *ML, g);
    const Mat Pi = -f.omega.inverse();
    const Mat L = L_of(f);
    const Mat ds = G.source_jacobian();
    const Mat P = S.pi.eval(as_span(g));
    const Mat lx = l.eval(as_span(g));
    double worst = 0.0;
    Mat Lk = Mat::Identity(G.dim(), G.dim());
    Mat lk = Mat::Identity(n, n);
    for (int k = 0; k <= 2; ++k) {
      worst = std::max(worst, max_abs(ds * Pi * Lk.transpose() * ds.transpose() - P.transpose() * lk));
      Lk = Lk * L;
      lk = lk * lx;
    }
    return Sample{worst, as_vector(g)};
  });
  rep.add("pushforward_Pi_Lk", push.value, tol, push.point, "σ_*(Π_{L^k}) = π_{l^k}, k = 0, 1, 2");

  const WorstCase torsion = sample_worst(opt.samples, opt.seed, 24, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    double m = 0.0;
    for (const auto& t : torsion_im_values(l, as_span(x))) m = std::max(m, t.max_abs());
    return Sample{m, as_vector(x)};
  });
  if (torsion.value < 1e-12) {
    // ω_{L^k} three ways: pointwise (L^k)^T Ω, the linear form of (-l^k, 0), and ∫(l^k∘φ^t)^*ω0.
    std::vector<std::shared_ptr<MultFormEvaluator>> route1;
    std::vector<TensorField11> lk;
    for (int k = 1; k <= 2; ++k) {
      lk.push_back(l.power(k));
      route1.push_back(omega_L(S, lk.back()));
    }
    std::vector<std::vector<Expr>> dlk(2);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int m = 0; m < n; ++m) dlk[static_cast<std::size_t>(k)].push_back(partial(lk[static_cast<std::size_t>(k)](i, j), m));
    const WorstCase two = sample_worst(opt.samples, opt.seed, 25, [&](SplitMix64& rng) {
      const Vec g = sample_validity(G, rng);
      const Trajectory tr = G.compute_trajectory(g, S.omega->grid());
      const FormPair f{S.omega->omega(tr).to_matrix(), ML->omega(tr).to_matrix()};
      const int d = G.dim();
      Mat O0 = Mat::Zero(d, d);
      O0.topRightCorner(n, n).setIdentity();
      O0.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
      double worst = 0.0;
      for (int k = 0; k < 2; ++k) {
        const auto K = static_cast<std::size_t>(k);
        const Mat pointwise = twisted(f, k + 1);
        const Mat r1 = route1[K]->omega(tr).to_matrix();
        Mat r2 = Mat::Zero(d, d);
        const TimeGrid& grid = S.omega->grid();
        for (std::size_t j = 0; j < grid.node.size(); ++j) {
          const auto i = static_cast<std::size_t>(grid.node[j]);
          const Vec& z = tr.x[i];
          Mat JF = Mat::Identity(d, d);
          JF.bottomRightCorner(n, n) = lk[K].eval(as_span(z));
          for (int a = 0; a < n; ++a)
            for (int m = 0; m < n; ++m) {
              double s = 0.0;
              for (int b = 0; b < n; ++b) s += dlk[K][static_cast<std::size_t>((a * n + b) * n + m)].eval(as_span(z)) * z[n + b];
              JF(n + a, m) = s;
            }
          const Mat JJ = JF * tr.J[i];
          r2 += grid.weight[j] * (JJ.transpose() * O0 * JJ);
        }
        worst = std::max({worst, max_abs(pointwise - r1), max_abs(r1 - r2)});
      }
      return Sample{worst, as_vector(g)};
    });
    rep.add("omega_Lk_routes", two.value, 1e-7, two.point, "(L^k)^T Ω, Λ_{(-l^k,0)} and ∫(l^k∘φ^t)^*ω0 for k = 1, 2");
  } else {
    rep.add_skipped("omega_Lk_routes", "l has nonzero torsion");
  }

  // Units derivative of ω_{L²} = ω(L² ·, ·): l-part -l², ν-part -T_l.
  const TensorField11 l2 = l.power(2);
  const IMFormData expect_l = nijenhuis_im_pair(l2);
  const WorstCase diff = sample_worst(std::min(opt.samples, 10), opt.seed, 26, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const Vec u = G.unit(x);
    auto w2 = [&](const Vec& h) { return as_form(twisted(forms_at(S, *ML, h), 2)); };
    const UnitsDerivative got = differentiate_at_units(w2(u), fd_exterior_derivative(w2, u), n, n);
    const std::vector<AltTensor> T = torsion_im_values(l, as_span(x));
    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
      const auto J = static_cast<std::size_t>(j);
      worst = std::max(worst, (got.l[J] - expect_l.l[J].eval(as_span(x))).max_abs());
      worst = std::max(worst, (got.nu[J] - T[J]).max_abs());
    }
    return Sample{worst, as_vector(x)};
  });
  rep.add("omega_L2_units", diff.value, tol, diff.point, "ω_{L²} differentiates to (-l², -T_l)");

  rep.merge(torsion_identity_check(S, l, opt, std::min(opt.samples, 10)));
  return rep;
}

CheckReport holomorphic_checks(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt) {
  CheckReport rep;
  const SprayGroupoid& G = *S.G;
  const int n = G.n();
  const WorstCase cx = sample_worst(opt.samples, opt.seed, 40, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const Mat lx = l.eval(as_span(x));
    return Sample{max_abs(lx * lx + Mat::Identity(n, n)), as_vector(x)};
  });
  rep.add("complex_structure", cx.value, 1e-12, cx.point, "l² = -id");
  if (!nijenhuis_prechecks(rep, S, l, opt, NijenhuisOptions{}) || !rep.find("complex_structure")->pass) {
    rep.add_skipped("holomorphic", "prechecks failed");
    return rep;
  }
  const auto ML = omega_L(S, l);
  const WorstCase sq = sample_worst(opt.samples, opt.seed, 41, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const FormPair f = forms_at(S, *ML, g);
    return Sample{max_abs(twisted(f, 2) + f.omega), as_vector(g)};
  });
  rep.add("omega_J2_plus_omega", sq.value, 1e-6, sq.point, "ω_{L²} = -ω");
  const WorstCase dsq = sample_worst(std::min(opt.samples, 10), opt.seed, 42, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    auto w2 = [&](const Vec& h) { return as_form(twisted(forms_at(S, *ML, h), 2)); };
    return Sample{fd_exterior_derivative(w2, g).max_abs(), as_vector(g)};
  });
  rep.add("domega_L2", dsq.value, 1e-6, dsq.point, "dω_{L²} = 0 for torsion-free l");
  rep.merge(torsion_identity_check(S, l, opt, std::min(opt.samples, 10)));
  return rep;
}

CheckReport gcs_identity_check(const SymplecticGroupoid& S, const TensorField11& l, const FormField& varpi,
                               const ScenarioOptions& opt, double precheck_tol) {
  CheckReport rep;
  const SprayGroupoid& G = *S.G;
  const int n = G.n();
  if (varpi.dim() != n || varpi.degree() != 2) throw ShapeError("gcs: ϖ must be a 2-form on the base");
  const WorstCase rel = sample_worst(opt.samples, opt.seed, 50, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const Mat N = l.eval(as_span(x)).transpose();
    const Mat P = S.pi.eval(as_span(x));
    const Mat W = varpi.eval(as_span(x)).to_matrix();
    return Sample{max_abs(N * N - P.transpose() * W + Mat::Identity(n, n)), as_vector(x)};
  });
  rep.add("gcs_relation", rel.value, precheck_tol, rel.point, "l² + π♯ϖ♭ = -id");
  if (!rep.find("gcs_relation")->pass) {
    rep.add_skipped("gcs_identity", "algebraic relation of the triple fails");
    return rep;
  }
  if (!nijenhuis_prechecks(rep, S, l, opt, NijenhuisOptions{})) {
    rep.add_skipped("gcs_identity", "prechecks failed");
    return rep;
  }
  const auto ML = omega_L(S, l);
  const WorstCase main = sample_worst(opt.samples, opt.seed, 51, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const Trajectory tr = G.compute_trajectory(g, S.omega->grid());
    const FormPair f{S.omega->omega(tr).to_matrix(), ML->omega(tr).to_matrix()};
    const Mat dt = G.target_jacobian(tr);
    const Mat ds = G.source_jacobian();
    const Vec tau = tr.x.back().head(n);
    const Mat exact = dt.transpose() * varpi.eval(as_span(tau)).to_matrix() * dt -
                      ds.transpose() * varpi.eval(as_span(g)).to_matrix() * ds;
    return Sample{max_abs(f.omega + twisted(f, 2) - exact), as_vector(g)};
  });
  rep.add("gcs_identity", main.value, 1e-6, main.point, "ω + ω_{L²} = τ^*ϖ - σ^*ϖ");
  return rep;
}

CheckReport exact_form_checks(std::shared_ptr<SprayGroupoid> G, const FormField& varpi, const ScenarioOptions& opt) {
  CheckReport rep;
  const int n = G->n();
  const IMFormData pair = exact_pair(G->algebroid(), varpi);
  const MultFormEvaluator M(G, linear_form(pair), opt.rule());
  const int k = varpi.degree();
  const FormField dvarpi = k < n ? exterior_derivative(varpi) : FormField();
  const WorstCase w = sample_worst(opt.samples, opt.seed, 60, [&](SplitMix64& rng) {
    const Vec g = sample_validity(*G, rng);
    const Trajectory tr = G->compute_trajectory(g, M.grid());
    const Mat dt = G->target_jacobian(tr);
    const Mat ds = G->source_jacobian();
    const Vec tau = tr.x.back().head(n);
    double r = (M.omega(tr) - (pullback(varpi.eval(as_span(tau)), dt) - pullback(varpi.eval(as_span(g)), ds))).max_abs();
    if (dvarpi.size() > 0)
      r = std::max(r, (M.domega(tr) - (pullback(dvarpi.eval(as_span(tau)), dt) -
                                       pullback(dvarpi.eval(as_span(g)), ds))).max_abs());
    return Sample{r, as_vector(g)};
  });
  rep.add("exact_form", w.value, 1e-7, w.point, "ω = τ^*ϖ - σ^*ϖ and dω = τ^*dϖ - σ^*dϖ");
  const WorstCase trip = sample_worst(opt.samples, opt.seed, 61, [&](SplitMix64& rng) {
    const Vec x = sample_base(*G, rng);
    return Sample{units_round_trip_residual(differentiate_at_units(M, x), pair, as_span(x)), as_vector(x)};
  });
  rep.add("exact_round_trip", trip.value, 1e-7, trip.point, "recovers (ϖ♭∘ρ, (dϖ)♭∘ρ)");
  return rep;
}

// ---------------------------------------------------------------------------
// Dirac

double subspace_distance(const Mat& a, const Mat& b) {
  auto basis = [](const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    int rank = 0;
    const double cut = s.size() ? 1e-9 * std::max(1.0, s[0]) : 0.0;
    while (rank < s.size() && s[rank] > cut) ++rank;
    return Mat(svd.matrixU().leftCols(rank));
  };
  const Mat qa = basis(a), qb = basis(b);
  if (qa.cols() != qb.cols()) return 1.0;
  if (qa.cols() == 0) return 0.0;
  const Mat res = qa - qb * (qb.transpose() * qa);
  Eigen::JacobiSVD<Mat> svd(res);
  return svd.singularValues()[0];
}

DiracScenario build_dirac(std::shared_ptr<const DiracFrame> frame, const Box& box, const ScenarioOptions& opt,
                          const FormField* graph_form, bool run_checks) {
  DiracScenario D;
  D.frame = frame;
  AlgebroidChart A = dirac_algebroid(frame, box, opt.samples, opt.seed);
  Spray V = default_spray(A);
  const IMFormData pair = dirac_pair(A);
  D.G = std::make_shared<SprayGroupoid>(std::move(A), std::move(V), Expr(), opt.steps_per_unit);
  D.omega = std::make_shared<MultFormEvaluator>(D.G, linear_form(pair), opt.rule());
  const SprayGroupoid& G = *D.G;
  const MultFormEvaluator& M = *D.omega;
  const int n = G.n();
  const int r = G.r();
  const int d = G.dim();

  auto robustness = [&](const Trajectory& tr) {
    Mat stacked(d + 2 * n, d);
    stacked << M.omega(tr).to_matrix(), G.source_jacobian(), G.target_jacobian(tr);
    return sigma_min(stacked);
  };
  ValidityOptions vo;
  vo.fiber_radius = opt.fiber_radius;
  vo.base_fraction = opt.base_fraction;
  vo.seed = opt.seed;
  vo.accept = [&](const Vec& g) { return robustness(G.compute_trajectory(g, M.grid())) >= opt.nondegeneracy_min; };
  D.G->set_validity_box(discover_validity_box(G, vo));
  CheckReport& rep = D.report;

  const BestCase robust = sample_best(opt.samples, opt.seed, 70, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    return Sample{robustness(G.compute_trajectory(g, M.grid())), as_vector(g)};
  });
  rep.add_margin("robustness_margin", robust.value, opt.nondegeneracy_min, robust.point,
                 "min σ_min of [ω♭; dσ; dτ] on the validity box");
  if (!run_checks) return D;

  const bool has_H = frame->has_H();
  if (has_H) {
    const bool top = frame->H.degree() >= n;
    const FormField dH = top ? FormField() : exterior_derivative(frame->H);
    const bool zero = top || dH.is_zero();
    const WorstCase hc = sample_worst(zero ? 0 : opt.samples, opt.seed, 78, [&](SplitMix64& rng) {
      const Vec x = sample_base(G, rng);
      return Sample{dH.eval(as_span(x)).max_abs(), as_vector(x)};
    });
    rep.add("H_closed", hc.value, 1e-12, hc.point, zero ? "dH = 0 symbolically" : "|dH| at samples");
  }
  const WorstCase twist = sample_worst(opt.samples, opt.seed, 71, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const Trajectory tr = G.compute_trajectory(g, M.grid());
    AltTensor rel = M.domega(tr);
    if (has_H) {
      const Vec tau = tr.x.back().head(n);
      rel -= pullback(frame->H.eval(as_span(tau)), G.target_jacobian(tr)) -
             pullback(frame->H.eval(as_span(g)), G.source_jacobian());
    }
    return Sample{rel.max_abs(), as_vector(g)};
  });
  rep.add("twisted_closedness", twist.value, 1e-6, twist.point, "dω = τ^*H - σ^*H");
  const WorstCase fd = sample_worst(std::min(opt.samples, 10), opt.seed, 72, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    auto f = [&](const Vec& h) { return M.omega(G.compute_trajectory(h, M.grid())); };
    return Sample{(fd_exterior_derivative(f, g) - M.domega(G.compute_trajectory(g, M.grid()))).max_abs(), as_vector(g)};
  });
  rep.add("domega_fd", fd.value, 1e-5, fd.point, "symbolic dω against finite differences of ω");

  const WorstCase fwd = sample_worst(opt.samples, opt.seed, 73, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const Trajectory tr = G.compute_trajectory(g, M.grid());
    const Mat Om = M.omega(tr).to_matrix();
    const Mat ds = G.source_jacobian();
    // graph(ω) pushed forward: {(dσ X, ξ) : i_X ω = dσ^T ξ}, with i_X ω = -Ω X.
    Mat K(d, d + n);
    K << -Om, -ds.transpose();
    Eigen::FullPivLU<Mat> lu(K);
    const Mat Z = lu.kernel();
    Mat image(2 * n, Z.cols());
    image << ds * Z.topRows(d), Z.bottomRows(n);
    Mat frame_m(2 * n, r);
    for (int i = 0; i < r; ++i) {
      const auto I = static_cast<std::size_t>(i);
      const AltTensor a = frame->alpha[I].eval(as_span(g));
      frame_m.col(i).head(n) = frame->v[I].eval(as_span(g));
      for (int k = 0; k < n; ++k) frame_m(n + k, i) = a.at(static_cast<std::size_t>(k));
    }
    return Sample{subspace_distance(image, frame_m), as_vector(g)};
  });
  rep.add("forward_dirac", fwd.value, 1e-5, fwd.point, "principal angles between σ_*graph(ω) and L");

  const WorstCase trip = sample_worst(opt.samples, opt.seed, 74, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    return Sample{units_round_trip_residual(differentiate_at_units(M, x), pair, as_span(x)), as_vector(x)};
  });
  rep.add("im_round_trip", trip.value, 1e-7, trip.point, "differentiation at units recovers (-ρ̄, H♭∘ρ)");

  const WorstCase units = sample_worst(opt.samples, opt.seed, 75, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    std::vector<AltTensor> l;
    for (const auto& f : pair.l) l.push_back(f.eval(as_span(x)));
    const AltTensor pred = units_form_predictor(G.algebroid().anchor_matrix(as_span(x)), l, 2);
    return Sample{(M.omega(G.unit(x)) - pred).max_abs(), as_vector(x)};
  });
  rep.add("units_formula", units.value, 1e-8, units.point, "ω at units against <α2|v1> - <α1|v2 + w2>");

  add_linearization(rep, M, opt, 76);

  if (graph_form) {
    const WorstCase gf = sample_worst(opt.samples, opt.seed, 77, [&](SplitMix64& rng) {
      const Vec g = sample_validity(G, rng);
      const Trajectory tr = G.compute_trajectory(g, M.grid());
      const Vec tau = tr.x.back().head(n);
      const AltTensor expect = pullback(graph_form->eval(as_span(g)), G.source_jacobian()) -
                               pullback(graph_form->eval(as_span(tau)), G.target_jacobian(tr));
      return Sample{(M.omega(tr) - expect).max_abs(), as_vector(g)};
    });
    rep.add("graph_form", gf.value, 1e-7, gf.point, "ω = σ^*ϖ - τ^*ϖ for L = graph(ϖ)");
  }
  return D;
}

// ---------------------------------------------------------------------------
// Jacobi

double contact_margin(const AltTensor& omega, const AltTensor& domega) {
  const int d = omega.dim();
  AltTensor top = omega;
  for (int i = 0; i < (d - 1) / 2; ++i) top = wedge(top, domega);
  return top.max_abs();
}

std::optional<AltTensor> jacobi_line_closed_form(const JacobiScenario& J, const Vec& g) {
  if (J.pi.dim() != 1 || !J.R[0].is_constant()) return std::nullopt;
  // φ^t(x, u, p) = (x - t c u, u, p), weight e^{-tcp}:
  // ω = ∫_0^1 e^{-tq}((1 + tq) du - p dx) dt with q = c p.
  const double c = J.R[0].constant_value();
  const double p = g[2];
  const double q = c * p;
  double cu, cx;
  if (std::abs(q) < 1e-4) {
    cu = 1.0 - q * q / 6.0 + q * q * q / 12.0;
    cx = -p * (1.0 - q / 2.0 + q * q / 6.0 - q * q * q / 24.0);
  } else {
    cu = (2.0 - 2.0 * std::exp(-q) - q * std::exp(-q)) / q;
    cx = -p * (1.0 - std::exp(-q)) / q;
  }
  AltTensor w(3, 1);
  w.at(0) = cx;
  w.at(1) = cu;
  return w;
}

JacobiScenario build_jacobi(const BivectorField& pi, const VectorField& R, const Box& box, const ScenarioOptions& opt,
                            bool run_checks) {
  JacobiScenario J;
  J.pi = pi;
  J.R = R;
  AlgebroidChart A = jacobi_algebroid(pi, R, box, opt.samples, opt.seed);
  J.cocycle = jacobi_cocycle(A);
  Spray V = default_spray(A);
  const int n = A.n;
  J.G = std::make_shared<SprayGroupoid>(std::move(A), std::move(V), J.cocycle, opt.steps_per_unit);
  J.omega = std::make_shared<MultFormEvaluator>(J.G, jacobi_linear_form(n), opt.rule());
  const SprayGroupoid& G = *J.G;
  const MultFormEvaluator& M = *J.omega;
  const int d = G.dim();

  ValidityOptions vo;
  vo.fiber_radius = opt.fiber_radius;
  vo.base_fraction = opt.base_fraction;
  vo.seed = opt.seed;
  J.G->set_validity_box(discover_validity_box(G, vo));
  CheckReport& rep = J.report;
  {
    std::vector<double> pt(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      pt[static_cast<std::size_t>(i)] = 0.5 * (G.validity_box().lo[i] + G.validity_box().hi[i]);
    rep.add("jacobi_compatibility", 0.0, 1e-9, pt, "checked when the algebroid was built");
  }
  if (!run_checks) return J;

  auto margin_at = [&](const Vec& g) {
    const Trajectory tr = G.compute_trajectory(g, M.grid());
    return contact_margin(M.omega(tr), M.domega(tr));
  };
  Vec origin = Vec::Zero(d);
  for (int i = 0; i < n; ++i) origin[i] = 0.5 * (G.validity_box().lo[i] + G.validity_box().hi[i]);
  rep.add_margin("contact_margin_origin", margin_at(origin), 0.1, as_vector(origin), "|ω∧(dω)^n| at the unit over the center");
  const BestCase cm = sample_best(opt.samples, opt.seed, 80, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    return Sample{margin_at(g), as_vector(g)};
  });
  rep.add_margin("contact_margin_box", cm.value, 1e-3, cm.point, "min |ω∧(dω)^n| on the validity box");

  if (jacobi_line_closed_form(J, origin)) {
    const WorstCase cf = sample_worst(opt.samples, opt.seed, 81, [&](SplitMix64& rng) {
      const Vec g = sample_validity(G, rng);
      return Sample{(M.omega(g) - *jacobi_line_closed_form(J, g)).max_abs(), as_vector(g)};
    });
    rep.add("closed_form", cf.value, 1e-8, cf.point, "ω against ∫ e^{-tq}((1+tq)du - p dx) dt");
  } else {
    rep.add_skipped("closed_form", "no closed form for this structure");
  }

  const WorstCase cw = sample_worst(opt.samples, opt.seed, 82, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    const double f = integrate_cocycle(G, J.cocycle, g, M.rule());
    const Trajectory tr = G.compute_trajectory(g, M.grid());
    return Sample{std::abs(std::exp(-f) - transport_weight(tr).back()), as_vector(g)};
  });
  rep.add("cocycle_weight", cw.value, 1e-10, cw.point, "|e^{-f} - w(1)|");

  // At units ker ω = TM ⊕ ker(pr), pr the u-component.
  const SpencerData sp = jacobi_spencer(n);
  const WorstCase ker = sample_worst(opt.samples, opt.seed, 83, [&](SplitMix64& rng) {
    const Vec x = sample_base(G, rng);
    const AltTensor w = M.omega(G.unit(x));
    Mat row(1, d);
    for (int i = 0; i < d; ++i) row(0, i) = w.at(static_cast<std::size_t>(i));
    Eigen::FullPivLU<Mat> lu(row);
    Mat expect = Mat::Zero(d, d - 1);
    for (int i = 0, c = 0; i < d; ++i)
      if (i != n) expect(i, c++) = 1.0;
    double r = subspace_distance(lu.kernel(), expect);
    const UnitsDerivative du = differentiate_at_units(w, AltTensor(d, 2), n, n + 1);
    for (int j = 0; j <= n; ++j) {
      const auto J2 = static_cast<std::size_t>(j);
      r = std::max(r, (du.l[J2] - sp.l[J2].eval(as_span(x))).max_abs());
    }
    return Sample{r, as_vector(x)};
  });
  rep.add("units_kernel", ker.value, 1e-8, ker.point, "ker ω at units is TM ⊕ ker(pr); l(a) = pr(a)");

  const WorstCase fd = sample_worst(std::min(opt.samples, 10), opt.seed, 84, [&](SplitMix64& rng) {
    const Vec g = sample_validity(G, rng);
    auto f = [&](const Vec& h) { return M.omega(G.compute_trajectory(h, M.grid())); };
    return Sample{(fd_exterior_derivative(f, g) - M.domega(G.compute_trajectory(g, M.grid()))).max_abs(), as_vector(g)};
  });
  rep.add("domega_fd", fd.value, 1e-5, fd.point, "weighted dω against finite differences of ω");
  add_linearization(rep, M, opt, 85);
  return J;
}

// ---------------------------------------------------------------------------
// Convergence

ConvergenceResult convergence_study(const EvaluatorFactory& make, const std::vector<Vec>& points,
                                    const std::vector<int>& ladder, const std::function<AltTensor(const Vec&)>& oracle,
                                    int fine_steps) {
  if (ladder.size() < 2) throw ShapeError("convergence ladder needs at least two levels");
  std::vector<int> levels = ladder;
  std::sort(levels.begin(), levels.end());
  ConvergenceResult res;
  res.reference = oracle ? "closed_form" : "finest";

  auto values = [&](const MultFormEvaluator& M) {
    std::vector<AltTensor> out(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
      out[i] = M.omega(M.groupoid().compute_trajectory(points[i], M.grid()));
    });
    return out;
  };
  auto max_diff = [](const std::vector<AltTensor>& a, const std::vector<AltTensor>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).max_abs());
    return m;
  };
  auto run_axis = [&](const std::string& axis, bool use_oracle, double& order, bool& exact) {
    std::vector<std::vector<AltTensor>> vals;
    for (int N : levels) {
      const bool quad = axis == "quadrature";
      const auto M = make(QuadratureRule::simpson(quad ? N : 2), quad ? std::max(fine_steps, N) : N);
      vals.push_back(values(*M));
    }
    std::vector<AltTensor> ref;
    if (use_oracle)
      for (const Vec& p : points) ref.push_back(oracle(p));
    else
      ref = vals.back();
    std::vector<double> hs, errs;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const double e = max_diff(vals[i], ref);
      res.rows.push_back({axis, levels[i], 1.0 / levels[i], e});
      if (use_oracle || i + 1 < levels.size()) {
        hs.push_back(1.0 / levels[i]);
        errs.push_back(e);
      }
    }
    exact = std::all_of(errs.begin(), errs.end(), [](double e) { return e < 1e-13; });
    order = exact ? std::numeric_limits<double>::quiet_NaN() : fit_order(hs, errs);
  };
  run_axis("quadrature", static_cast<bool>(oracle), res.quadrature_order, res.quadrature_exact);
  run_axis("ode", false, res.ode_order, res.ode_exact);
  return res;
}

}  // namespace mulform
