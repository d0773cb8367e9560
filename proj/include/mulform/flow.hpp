#pragma once

// Fixed-step RK4 integration of vector fields on R^d together with the
// variational equation dJ/dt = DV(φ^t) J, plus quadrature on [0, 1].

#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "mulform/expr.hpp"
#include "mulform/tensor.hpp"

namespace mulform {

/// Axis-aligned coordinate box; infinite bounds are allowed.
struct Box {
  Vec lo;
  Vec hi;

  static Box unbounded(int dim);
  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x) const;
};

/// Compiled vector field with exact Jacobian, and an optional scalar
/// accumulator rate g so that ds/dt = g(φ^t(a)) is integrated alongside.
class VectorFieldEvaluator {
 public:
  VectorFieldEvaluator() = default;
  explicit VectorFieldEvaluator(std::vector<Expr> field, Expr accumulator_rate = Expr());

  int dim() const { return dim_; }
  bool is_zero() const { return zero_; }
  bool has_accumulator() const { return has_acc_; }
  const std::vector<Expr>& components() const { return field_; }
  const Expr& accumulator_rate() const { return rate_; }

  void value(const Vec& x, Vec& out) const;
  /// Field values, Jacobian DV(x) and (if present) the rate g and its gradient.
  void full(const Vec& x, Vec& v, Mat& dv, double& g, Vec& dg) const;

 private:
  int dim_ = 0;
  bool zero_ = true;
  bool has_acc_ = false;
  std::vector<Expr> field_;
  Expr rate_;
  Program value_prog_;
  Program full_prog_;
};

struct FlowOptions {
  double tol = 1e-10;
  Box box;                 // empty means unbounded
  int max_steps = 1 << 20;
};

/// φ^t(a): RK4 with the step halved until the step-doubling error estimate is below tol.
Vec flow(const VectorFieldEvaluator& V, const Vec& a, double t, const FlowOptions& opt = {});

struct Trajectory {
  Vec a;
  std::vector<double> t;
  std::vector<Vec> x;       // φ^{t_j}(a)
  std::vector<Mat> J;       // dφ^{t_j} at a
  std::vector<double> s;    // accumulator s(t_j), s(0) = 0
  std::vector<Vec> ds;      // gradient of s(t_j) with respect to a
  bool has_accumulator = false;
};

struct TrajectoryOptions {
  int steps_per_unit = 64;  // RK4 step h <= 1/steps_per_unit, aligned with the grid
  Box box;
};

/// Integrates state, Jacobian and accumulator in lockstep and records them at
/// the increasing grid times (which must start at 0).
Trajectory flow_with_jacobian(const VectorFieldEvaluator& V, const Vec& a, const std::vector<double>& grid,
                              const TrajectoryOptions& opt = {});

enum class QuadratureKind { Simpson, GaussLegendre };

/// Nodes and weights on [0, 1].
struct QuadratureRule {
  QuadratureKind kind = QuadratureKind::Simpson;
  int n = 64;  // Simpson: number of intervals (even); Gauss-Legendre: number of nodes
  std::vector<double> nodes;
  std::vector<double> weights;

  static QuadratureRule simpson(int intervals);
  static QuadratureRule gauss_legendre(int nodes);
};

template <class F>
auto quad(F&& f, const QuadratureRule& rule) {
  using T = std::decay_t<decltype(f(rule.nodes[0]))>;
  T acc = rule.weights[0] * f(rule.nodes[0]);
  for (std::size_t j = 1; j < rule.nodes.size(); ++j) acc += rule.weights[j] * f(rule.nodes[j]);
  return acc;
}

}  // namespace mulform
