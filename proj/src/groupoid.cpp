#include "mulform/groupoid.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "mulform/errors.hpp"
#include "mulform/parallel.hpp"

namespace mulform {

namespace {

AltTensor run_form(const Program& prog, int dim, int degree, const Vec& x) {
  AltTensor out(dim, degree);
  if (out.size() == 0) return out;
  thread_local std::vector<double> buf;
  buf.resize(out.size());
  prog.run(as_span(x), buf);
  for (std::size_t p = 0; p < out.size(); ++p) out.at(p) = buf[p];
  return out;
}

constexpr std::size_t kCacheLimit = 1024;

}  // namespace

TimeGrid::TimeGrid(const QuadratureRule& rule) {
  t.push_back(0.0);
  for (double s : rule.nodes)
    if (s > t.back()) t.push_back(s);
  if (t.back() < 1.0) t.push_back(1.0);
  for (double s : rule.nodes) node.push_back(static_cast<int>(std::lower_bound(t.begin(), t.end(), s) - t.begin()));
  weight = rule.weights;
}

SprayGroupoid::SprayGroupoid(AlgebroidChart A, Spray V, Expr weight_rate, int steps_per_unit)
    : A_(std::move(A)), V_(std::move(V)), eval_(V_.evaluator(weight_rate)), steps_(steps_per_unit) {
  if (V_.n != A_.n || V_.r != A_.r) throw ShapeError("spray and algebroid dimensions differ");
  if (steps_ < 1) throw ShapeError("steps_per_unit must be positive");
}

Box SprayGroupoid::domain() const {
  Box b = Box::unbounded(dim());
  if (A_.box.dim() == A_.n) {
    b.lo.head(A_.n) = A_.box.lo;
    b.hi.head(A_.n) = A_.box.hi;
  }
  return b;
}

Vec SprayGroupoid::target(const Vec& g) const {
  if (eval_.is_zero()) return g.head(A_.n);
  const Trajectory tr = flow_with_jacobian(eval_, g, {0.0, 1.0}, TrajectoryOptions{steps_, domain()});
  return tr.x.back().head(A_.n);
}

Vec SprayGroupoid::inverse(const Vec& g) const {
  Vec out = g;
  if (!eval_.is_zero()) out = flow_with_jacobian(eval_, g, {0.0, 1.0}, TrajectoryOptions{steps_, domain()}).x.back();
  out.tail(A_.r) *= -1.0;
  return out;
}

Vec SprayGroupoid::unit(const Vec& x) const {
  Vec g = Vec::Zero(dim());
  g.head(A_.n) = x.head(A_.n);
  return g;
}

Mat SprayGroupoid::source_jacobian() const {
  Mat S = Mat::Zero(A_.n, dim());
  S.leftCols(A_.n).setIdentity();
  return S;
}

Mat SprayGroupoid::target_jacobian(const Trajectory& traj) const {
  if (traj.t.empty() || traj.t.back() != 1.0) throw ShapeError("target_jacobian needs a trajectory reaching t = 1");
  return traj.J.back().topRows(A_.n);
}

Trajectory SprayGroupoid::compute_trajectory(const Vec& g, const TimeGrid& grid) const {
  return flow_with_jacobian(eval_, g, grid.t, TrajectoryOptions{steps_, domain()});
}

std::shared_ptr<const Trajectory> SprayGroupoid::trajectory(const Vec& g, const TimeGrid& grid) const {
  std::vector<double> key = as_vector(g);
  key.push_back(static_cast<double>(grid.t.size()));
  key.push_back(grid.t.size() > 1 ? grid.t[1] : 0.0);
  {
    std::shared_lock lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto traj = std::make_shared<const Trajectory>(compute_trajectory(g, grid));
  std::unique_lock lock(cache_mutex_);
  if (cache_.size() >= kCacheLimit) cache_.clear();
  cache_.emplace(std::move(key), traj);
  return traj;
}

void SprayGroupoid::clear_cache() const {
  std::unique_lock lock(cache_mutex_);
  cache_.clear();
}

Box discover_validity_box(const SprayGroupoid& G, const ValidityOptions& opt) {
  const int n = G.n();
  const int r = G.r();
  Box base{Vec::Constant(n, -1.0), Vec::Constant(n, 1.0)};
  const Box& chart = G.algebroid().box;
  if (chart.dim() == n)
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(chart.lo[i]) || !std::isfinite(chart.hi[i])) continue;
      const double c = 0.5 * (chart.lo[i] + chart.hi[i]);
      const double h = 0.5 * (chart.hi[i] - chart.lo[i]) * opt.base_fraction;
      base.lo[i] = c - h;
      base.hi[i] = c + h;
    }
  const TimeGrid grid(QuadratureRule::simpson(2));
  const SplitMix64 root(opt.seed);
  const int d = n + r;
  const int corners = d <= 8 ? (1 << d) : 0;
  for (double radius = opt.fiber_radius; radius >= opt.min_radius; radius *= 0.5) {
    Box total{Vec(d), Vec(d)};
    total.lo << base.lo, Vec::Constant(r, -radius);
    total.hi << base.hi, Vec::Constant(r, radius);
    const std::size_t count = static_cast<std::size_t>(corners + opt.samples);
    std::vector<char> ok(count, 0);
    parallel_for(count, [&](std::size_t s) {
      Vec g(d);
      if (static_cast<int>(s) < corners) {
        for (int i = 0; i < d; ++i) g[i] = (s >> i) & 1U ? total.hi[i] : total.lo[i];
      } else {
        SplitMix64 rng = root.fork(s);
        g = sample_total(base, r, radius, rng);
      }
      try {
        G.compute_trajectory(g, grid);
        ok[s] = !opt.accept || opt.accept(g);
      } catch (const DomainExit&) {
      } catch (const StepUnderflow&) {
      } catch (const DegeneracyError&) {
      } catch (const DomainError&) {
      }
    });
    if (std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; })) return total;
  }
  throw DomainError("no fiber radius above the minimum keeps the spray flows inside the chart");
}

MultFormEvaluator::MultFormEvaluator(std::shared_ptr<const SprayGroupoid> G, LinearForm L, QuadratureRule rule)
    : G_(std::move(G)), L_(std::move(L)), rule_(std::move(rule)), grid_(rule_) {
  if (L_.n != G_->n() || L_.r != G_->r()) throw ShapeError("linear form and groupoid dimensions differ");
  form_prog_ = Program(L_.form.components());
  if (L_.degree() < L_.total_dim()) {
    dL_ = exterior_derivative(L_.form);
    dform_prog_ = Program(dL_.components());
  }
}

AltTensor MultFormEvaluator::omega(const Vec& g) const { return omega(*G_->trajectory(g, grid_)); }
AltTensor MultFormEvaluator::domega(const Vec& g) const { return domega(*G_->trajectory(g, grid_)); }

AltTensor MultFormEvaluator::omega(const Trajectory& traj) const {
  const int d = L_.total_dim();
  const int k = L_.degree();
  AltTensor acc(d, k);
  for (std::size_t j = 0; j < grid_.node.size(); ++j) {
    const auto i = static_cast<std::size_t>(grid_.node[j]);
    double w = grid_.weight[j];
    if (traj.has_accumulator) w *= std::exp(-traj.s[i]);
    acc += w * pullback(run_form(form_prog_, d, k, traj.x[i]), traj.J[i]);
  }
  return acc;
}

AltTensor MultFormEvaluator::domega(const Trajectory& traj) const {
  const int d = L_.total_dim();
  const int k = L_.degree();
  AltTensor acc(d, k + 1);
  if (acc.size() == 0) return acc;
  for (std::size_t j = 0; j < grid_.node.size(); ++j) {
    const auto i = static_cast<std::size_t>(grid_.node[j]);
    double w = grid_.weight[j];
    AltTensor term = pullback(run_form(dform_prog_, d, k + 1, traj.x[i]), traj.J[i]);
    if (traj.has_accumulator) {
      // d(e^{-s} φ^*Λ) = e^{-s} (φ^*dΛ - ds ∧ φ^*Λ)
      w *= std::exp(-traj.s[i]);
      term -= wedge(AltTensor::covector(traj.ds[i]), pullback(run_form(form_prog_, d, k, traj.x[i]), traj.J[i]));
    }
    acc += w * term;
  }
  return acc;
}

namespace {

template <class T, class F>
T central4(const F& f, const Vec& g, const Vec& dir, double h) {
  T out = (8.0 / (12.0 * h)) * (f(Vec(g + h * dir)) - f(Vec(g - h * dir)));
  out -= (1.0 / (12.0 * h)) * (f(Vec(g + 2 * h * dir)) - f(Vec(g - 2 * h * dir)));
  return out;
}

}  // namespace

AltTensor fd_exterior_derivative(const std::function<AltTensor(const Vec&)>& f, const Vec& g, double h) {
  const int d = static_cast<int>(g.size());
  std::vector<AltTensor> partials;
  for (int i = 0; i < d; ++i) partials.push_back(central4<AltTensor>(f, g, Vec::Unit(d, i), h));
  const int k = partials[0].degree();
  AltTensor out(d, k + 1);
  const auto& tab = multi_indices(d, k + 1);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    double v = 0.0;
    const auto& idx = tab.indices[p];
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const Mask rest = tab.masks[p] & ~(Mask{1} << idx[m]);
      v += (m % 2 ? -1.0 : 1.0) * partials[static_cast<std::size_t>(idx[m])].at_mask(rest);
    }
    out.at(p) = v;
  }
  return out;
}

Mat fd_directional(const std::function<Mat(const Vec&)>& f, const Vec& g, const Vec& dir, double h) {
  return central4<Mat>(f, g, dir, h);
}

Vec multiply_poisson(const MultFormEvaluator& omega, const Vec& a, const Vec& b, const MultiplyOptions& opt) {
  const SprayGroupoid& G = omega.groupoid();
  const int n = G.n();
  if (G.r() != n || omega.degree() != 2)
    throw ShapeError("multiply_poisson needs the symplectic form of a cotangent groupoid");
  if (opt.steps < 1) throw ShapeError("multiply_poisson: steps must be positive");
  const Vec tb = G.target(b);
  const double gap = (a.head(n) - tb).lpNorm<Eigen::Infinity>();
  if (!(gap <= opt.composability_tol))
    throw PreconditionError("composability", "source of the first factor differs from the target of the second", gap);

  const int M = opt.steps;
  std::vector<double> half_grid;
  for (int i = 0; i <= 2 * M; ++i) half_grid.push_back(i == 2 * M ? 1.0 : static_cast<double>(i) / (2 * M));
  const Trajectory ta = flow_with_jacobian(G.field(), a, half_grid, TrajectoryOptions{G.steps_per_unit(), G.domain()});

  // The base part of dk/dt vanishes exactly (σ-fibers are preserved), so only
  // the fiber part is integrated and σ(k_t) = σ(b) holds to the last bit.
  auto rate = [&](const Vec& k, int half_index) {
    const Trajectory tk = G.compute_trajectory(k, omega.grid());
    const Mat pi_sharp = invert_2form(omega.omega(tk));
    const Mat dtau = G.target_jacobian(tk);
    const Vec xi = ta.x[static_cast<std::size_t>(half_index)].tail(n);
    Vec kdot = -pi_sharp * (dtau.transpose() * xi);
    kdot.head(n).setZero();
    return kdot;
  };
  const double h = 1.0 / M;
  Vec k = b;
  for (int i = 0; i < M; ++i) {
    const Vec k1 = rate(k, 2 * i);
    const Vec k2 = rate(k + 0.5 * h * k1, 2 * i + 1);
    const Vec k3 = rate(k + 0.5 * h * k2, 2 * i + 1);
    const Vec k4 = rate(k + h * k3, 2 * i + 2);
    k += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return k;
}

double integrate_cocycle(const SprayGroupoid& G, const Expr& delta, const Vec& g, const QuadratureRule& rule) {
  const int deg = fiber_degree(delta, G.n());
  if (deg != 1 && deg != kAnyDegree)
    throw PreconditionError("cocycle_linearity", "cocycle expression is not linear in the fiber variables", 1.0);
  if (delta.is_zero()) return 0.0;
  const TimeGrid grid(rule);
  const Trajectory tr = G.compute_trajectory(g, grid);
  double f = 0.0;
  for (std::size_t j = 0; j < grid.node.size(); ++j)
    f += grid.weight[j] * delta.eval(as_span(tr.x[static_cast<std::size_t>(grid.node[j])]));
  return f;
}

UnitsDerivative differentiate_at_units(const AltTensor& omega, const AltTensor& domega, int n, int r) {
  const int d = n + r;
  Mat inc = Mat::Zero(d, n);
  inc.topRows(n).setIdentity();
  UnitsDerivative out;
  for (int j = 0; j < r; ++j) {
    const Vec e = Vec::Unit(d, n + j);
    out.l.push_back(pullback(interior(e, omega), inc));
    if (domega.size() > 0) out.nu.push_back(pullback(interior(e, domega), inc));
  }
  return out;
}

UnitsDerivative differentiate_at_units(const MultFormEvaluator& M, const Vec& x) {
  const Vec u = M.groupoid().unit(x);
  const auto traj = M.groupoid().trajectory(u, M.grid());
  return differentiate_at_units(M.omega(*traj), M.domega(*traj), M.groupoid().n(), M.groupoid().r());
}

double units_round_trip_residual(const UnitsDerivative& got, const IMFormData& expected, std::span<const double> x) {
  double res = 0.0;
  for (int j = 0; j < expected.r; ++j) {
    const auto J = static_cast<std::size_t>(j);
    res = std::max(res, (got.l[J] - expected.l[J].eval(x)).max_abs());
    if (J < got.nu.size() && expected.nu[J].size() > 0)
      res = std::max(res, (got.nu[J] - expected.nu[J].eval(x)).max_abs());
  }
  return res;
}

double fit_order(const std::vector<double>& h, const std::vector<double>& error) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(error[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

LinearizationResult linearization_check(const MultFormEvaluator& M, const Vec& a, const std::vector<double>& ladder) {
  const SprayGroupoid& G = M.groupoid();
  const int n = G.n();
  const int d = G.dim();
  const AltTensor lam = M.linear_form().form.eval(as_span(a));
  LinearizationResult res;
  for (double t : ladder) {
    Vec g = a;
    g.tail(G.r()) *= t;
    Mat dm = Mat::Identity(d, d);
    dm.bottomRightCorner(d - n, d - n) *= t;
    const AltTensor scaled = (1.0 / t) * pullback(M.omega(G.compute_trajectory(g, M.grid())), dm);
    res.t.push_back(t);
    res.error.push_back((scaled - lam).max_abs());
  }
  res.exact = std::all_of(res.error.begin(), res.error.end(), [](double e) { return e < 1e-13; });
  res.slope = res.exact ? std::numeric_limits<double>::quiet_NaN() : fit_order(res.t, res.error);
  return res;
}

AltTensor units_form_predictor(const Mat& rho, const std::vector<AltTensor>& l, int k) {
  const int n = static_cast<int>(rho.rows());
  const int r = static_cast<int>(rho.cols());
  const int d = n + r;
  AltTensor out(d, k);
  const auto& tab = multi_indices(d, k);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    const auto& idx = tab.indices[p];
    std::vector<int> base, fiber;
    for (int i : idx) (i < n ? base : fiber).push_back(i - (i < n ? 0 : n));
    const int j = static_cast<int>(fiber.size());
    if (j == 0) continue;
    // Sorted order puts base slots first; moving the j fiber slots in front costs (-1)^{j(k-j)}.
    const double sign = (j * (k - j)) % 2 ? -1.0 : 1.0;
    double v = 0.0;
    for (int i = 0; i < j; ++i) {
      Mat cols(n, k - 1);
      int c = 0;
      for (int m = 0; m < j; ++m)
        if (m != i) cols.col(c++) = rho.col(fiber[static_cast<std::size_t>(m)]);
      for (int b : base) cols.col(c++) = Vec::Unit(n, b);
      v += (i % 2 ? -1.0 : 1.0) * l[static_cast<std::size_t>(fiber[static_cast<std::size_t>(i)])].evaluate(cols);
    }
    out.at(p) = sign * v / j;
  }
  return out;
}

double units_form_predictor(const Mat& rho, const std::vector<AltTensor>& l, int k, const Mat& vs) {
  return units_form_predictor(rho, l, k).evaluate(vs);
}

}  // namespace mulform
