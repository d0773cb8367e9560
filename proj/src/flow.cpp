#include "mulform/flow.hpp"

#include <cmath>
#include <numbers>

#include "mulform/errors.hpp"

namespace mulform {

Box Box::unbounded(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return Box{Vec::Constant(dim, -inf), Vec::Constant(dim, inf)};
}

bool Box::contains(const Vec& x) const {
  if (lo.size() == 0) return x.allFinite();
  if (x.size() != lo.size()) throw ShapeError("box dimension mismatch");
  for (int i = 0; i < x.size(); ++i)
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  return true;
}

VectorFieldEvaluator::VectorFieldEvaluator(std::vector<Expr> field, Expr accumulator_rate)
    : dim_(static_cast<int>(field.size())), field_(std::move(field)), rate_(std::move(accumulator_rate)) {
  for (const Expr& e : field_) {
    if (e.max_variable() >= dim_) throw ShapeError("vector field references a variable beyond its dimension");
    if (!e.is_zero()) zero_ = false;
  }
  if (rate_.max_variable() >= dim_) throw ShapeError("accumulator references a variable beyond the dimension");
  has_acc_ = !rate_.is_zero();
  value_prog_ = Program(field_);
  std::vector<Expr> all = field_;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) all.push_back(partial(field_[static_cast<std::size_t>(i)], j));
  all.push_back(rate_);
  for (int j = 0; j < dim_; ++j) all.push_back(partial(rate_, j));
  full_prog_ = Program(all);
}

void VectorFieldEvaluator::value(const Vec& x, Vec& out) const {
  out.resize(dim_);
  value_prog_.run(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                  std::span<double>(out.data(), static_cast<std::size_t>(dim_)));
}

void VectorFieldEvaluator::full(const Vec& x, Vec& v, Mat& dv, double& g, Vec& dg) const {
  const auto d = static_cast<std::size_t>(dim_);
  thread_local std::vector<double> buf;
  buf.resize(d + d * d + 1 + d);
  full_prog_.run(std::span<const double>(x.data(), d), buf);
  v.resize(dim_);
  dv.resize(dim_, dim_);
  dg.resize(dim_);
  for (std::size_t i = 0; i < d; ++i) v[static_cast<Eigen::Index>(i)] = buf[i];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      dv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[d + i * d + j];
  g = buf[d + d * d];
  for (std::size_t j = 0; j < d; ++j) dg[static_cast<Eigen::Index>(j)] = buf[d + d * d + 1 + j];
}

namespace {

Vec rk4_fixed(const VectorFieldEvaluator& V, const Vec& a, double t, long steps, const Box& box) {
  const double h = t / static_cast<double>(steps);
  Vec x = a, k1, k2, k3, k4, tmp;
  for (long s = 0; s < steps; ++s) {
    V.value(x, k1);
    tmp = x + 0.5 * h * k1;
    V.value(tmp, k2);
    tmp = x + 0.5 * h * k2;
    V.value(tmp, k3);
    tmp = x + h * k3;
    V.value(tmp, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!box.contains(x)) throw DomainExit(h * static_cast<double>(s + 1), std::vector<double>(x.data(), x.data() + x.size()));
  }
  return x;
}

}  // namespace

Vec flow(const VectorFieldEvaluator& V, const Vec& a, double t, const FlowOptions& opt) {
  if (a.size() != V.dim()) throw ShapeError("flow: point dimension does not match the field");
  if (!opt.box.contains(a)) throw DomainExit(0.0, std::vector<double>(a.data(), a.data() + a.size()));
  if (V.is_zero() || t == 0.0) return a;
  long n = std::max<long>(1, static_cast<long>(std::ceil(std::abs(t) / 0.125)));
  Vec coarse = rk4_fixed(V, a, t, n, opt.box);
  while (2 * n <= opt.max_steps) {
    Vec fine = rk4_fixed(V, a, t, 2 * n, opt.box);
    // RK4 global error scales as h^4, so coarse - fine ≈ 15 × error(fine).
    const double err = (fine - coarse).lpNorm<Eigen::Infinity>() / 15.0;
    if (err < opt.tol * (1.0 + fine.lpNorm<Eigen::Infinity>())) return fine;
    coarse = std::move(fine);
    n *= 2;
  }
  throw StepUnderflow("flow: tolerance " + std::to_string(opt.tol) + " not reached with " +
                      std::to_string(opt.max_steps) + " steps");
}

Trajectory flow_with_jacobian(const VectorFieldEvaluator& V, const Vec& a, const std::vector<double>& grid,
                              const TrajectoryOptions& opt) {
  const int d = V.dim();
  if (a.size() != d) throw ShapeError("flow_with_jacobian: point dimension does not match the field");
  if (grid.empty() || grid.front() != 0.0) throw ShapeError("flow_with_jacobian: grid must start at 0");
  if (!opt.box.contains(a)) throw DomainExit(0.0, std::vector<double>(a.data(), a.data() + a.size()));

  Trajectory tr;
  tr.a = a;
  tr.t = grid;
  tr.has_accumulator = V.has_accumulator();
  const std::size_t m = grid.size();
  tr.x.reserve(m);
  tr.J.reserve(m);
  tr.s.reserve(m);
  tr.ds.reserve(m);

  Vec x = a;
  Mat J = Mat::Identity(d, d);
  double s = 0.0;
  Vec ds = Vec::Zero(d);
  auto record = [&] {
    tr.x.push_back(x);
    tr.J.push_back(J);
    tr.s.push_back(s);
    tr.ds.push_back(ds);
  };
  record();

  if (V.is_zero()) {
    for (std::size_t j = 1; j < m; ++j) record();
    return tr;
  }

  Vec v1, v2, v3, v4, dg1, dg2, dg3, dg4, xs;
  Mat D1, D2, D3, D4, K1, K2, K3, K4, Js;
  double g1, g2, g3, g4;
  Vec L1, L2, L3, L4, dss;
  for (std::size_t j = 1; j < m; ++j) {
    const double span = grid[j] - grid[j - 1];
    if (!(span > 0.0)) throw ShapeError("flow_with_jacobian: grid must be strictly increasing");
    const long steps = std::max<long>(1, static_cast<long>(std::ceil(span * opt.steps_per_unit - 1e-9)));
    const double h = span / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
      V.full(x, v1, D1, g1, dg1);
      K1.noalias() = D1 * J;
      L1.noalias() = J.transpose() * dg1;
      xs = x + 0.5 * h * v1;
      Js = J + 0.5 * h * K1;
      V.full(xs, v2, D2, g2, dg2);
      K2.noalias() = D2 * Js;
      L2.noalias() = Js.transpose() * dg2;
      xs = x + 0.5 * h * v2;
      Js = J + 0.5 * h * K2;
      V.full(xs, v3, D3, g3, dg3);
      K3.noalias() = D3 * Js;
      L3.noalias() = Js.transpose() * dg3;
      xs = x + h * v3;
      Js = J + h * K3;
      V.full(xs, v4, D4, g4, dg4);
      K4.noalias() = D4 * Js;
      L4.noalias() = Js.transpose() * dg4;
      x += (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
      J += (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
      s += (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
      ds += (h / 6.0) * (L1 + 2.0 * L2 + 2.0 * L3 + L4);
      if (!opt.box.contains(x))
        throw DomainExit(grid[j - 1] + h * static_cast<double>(k + 1), std::vector<double>(x.data(), x.data() + d));
    }
    record();
  }
  return tr;
}

QuadratureRule QuadratureRule::simpson(int intervals) {
  if (intervals < 2 || intervals % 2) throw ShapeError("Simpson rule needs an even number of intervals >= 2");
  QuadratureRule r;
  r.kind = QuadratureKind::Simpson;
  r.n = intervals;
  const double h = 1.0 / intervals;
  for (int j = 0; j <= intervals; ++j) {
    r.nodes.push_back(j == intervals ? 1.0 : j * h);
    const double c = (j == 0 || j == intervals) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    r.weights.push_back(c * h / 3.0);
  }
  return r;
}

QuadratureRule QuadratureRule::gauss_legendre(int count) {
  if (count < 1) throw ShapeError("Gauss-Legendre rule needs at least one node");
  QuadratureRule r;
  r.kind = QuadratureKind::GaussLegendre;
  r.n = count;
  r.nodes.resize(static_cast<std::size_t>(count));
  r.weights.resize(static_cast<std::size_t>(count));
  // Newton iteration on P_n from the Chebyshev initial guess, mapped to [0, 1].
  for (int i = 0; i < count; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= count; ++k) {
        const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (count == 1) p0 = 1.0, p1 = z;
      dp = count * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const auto idx = static_cast<std::size_t>(count - 1 - i);  // ascending nodes
    r.nodes[idx] = 0.5 * (1.0 + z);
    r.weights[idx] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

}  // namespace mulform
