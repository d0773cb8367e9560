#pragma once

// The local groupoid of a spray V on an algebroid chart: σ = q, τ = q∘φ¹,
// ι = -φ¹, u(x) = 0_x. Multiplicative forms are evaluated by quadrature of
// the pulled-back linear form along the spray flow,
//   ω_a = ∫_0^1 w(t) (φ^t)^*Λ_{φ^t(a)} dt,
// with w ≡ 1 for trivial coefficients and w = exp(-∫_0^t R̃) in the Jacobi case.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "mulform/algebroid.hpp"
#include "mulform/imform.hpp"

namespace mulform {

/// Quadrature nodes merged into a flow grid that always contains 0 and 1.
struct TimeGrid {
  std::vector<double> t;
  std::vector<int> node;  // grid index of the j-th quadrature node
  std::vector<double> weight;

  explicit TimeGrid(const QuadratureRule& rule);
  int last() const { return static_cast<int>(t.size()) - 1; }
};

class SprayGroupoid {
 public:
  /// `weight_rate` is the accumulator rate R̃ for the Jacobi case (zero otherwise).
  SprayGroupoid(AlgebroidChart A, Spray V, Expr weight_rate = Expr(), int steps_per_unit = 64);

  const AlgebroidChart& algebroid() const { return A_; }
  const Spray& spray() const { return V_; }
  const VectorFieldEvaluator& field() const { return eval_; }
  bool weighted() const { return eval_.has_accumulator(); }
  int n() const { return A_.n; }
  int r() const { return A_.r; }
  int dim() const { return A_.n + A_.r; }
  int steps_per_unit() const { return steps_; }

  /// Sub-box of the total space on which the flows for t ∈ [0, 1] stay inside the chart.
  const Box& validity_box() const { return validity_; }
  void set_validity_box(Box b) { validity_ = std::move(b); }
  /// Chart box extended by unbounded fibers; flows leaving it raise DomainExit.
  Box domain() const;

  Vec source(const Vec& g) const { return g.head(A_.n); }
  Vec target(const Vec& g) const;
  Vec inverse(const Vec& g) const;
  Vec unit(const Vec& x) const;
  /// dσ = [I 0] and dτ = top rows of dφ¹, both n x (n+r).
  Mat source_jacobian() const;
  Mat target_jacobian(const Trajectory& traj) const;

  /// Flow data on a time grid, memoized per point (bounded cache).
  std::shared_ptr<const Trajectory> trajectory(const Vec& g, const TimeGrid& grid) const;
  /// Same without touching the cache, for one-off points.
  Trajectory compute_trajectory(const Vec& g, const TimeGrid& grid) const;
  void clear_cache() const;

 private:
  AlgebroidChart A_;
  Spray V_;
  VectorFieldEvaluator eval_;
  int steps_;
  Box validity_;

  mutable std::shared_mutex cache_mutex_;
  mutable std::map<std::vector<double>, std::shared_ptr<const Trajectory>> cache_;
};

/// Shrinks the fiber radius (halving) until every sampled flow stays inside
/// the chart for t ∈ [0, 1], the base being the chart box scaled by
/// `base_fraction` about its center. Throws DomainError if no radius works.
struct ValidityOptions {
  double fiber_radius = 0.5;
  double base_fraction = 0.5;
  double min_radius = 1.0 / 1024;
  int samples = 64;
  std::uint64_t seed = 1;
  /// Extra acceptance test per sampled point (e.g. nondegeneracy of ω).
  std::function<bool(const Vec&)> accept;
};
Box discover_validity_box(const SprayGroupoid& G, const ValidityOptions& opt = {});

class MultFormEvaluator {
 public:
  MultFormEvaluator(std::shared_ptr<const SprayGroupoid> G, LinearForm L, QuadratureRule rule);

  const SprayGroupoid& groupoid() const { return *G_; }
  std::shared_ptr<const SprayGroupoid> groupoid_ptr() const { return G_; }
  const LinearForm& linear_form() const { return L_; }
  const QuadratureRule& rule() const { return rule_; }
  const TimeGrid& grid() const { return grid_; }
  int degree() const { return L_.degree(); }

  AltTensor omega(const Vec& g) const;
  AltTensor domega(const Vec& g) const;
  /// Same quadratures on an already computed trajectory.
  AltTensor omega(const Trajectory& traj) const;
  AltTensor domega(const Trajectory& traj) const;

  double eval_omega(const Vec& g, const Mat& vs) const { return omega(g).evaluate(vs); }
  double eval_domega(const Vec& g, const Mat& vs) const { return domega(g).evaluate(vs); }

 private:
  std::shared_ptr<const SprayGroupoid> G_;
  LinearForm L_;
  FormField dL_;
  QuadratureRule rule_;
  TimeGrid grid_;
  Program form_prog_;
  Program dform_prog_;
};

/// 4th-order central-difference exterior derivative of a form-valued map.
AltTensor fd_exterior_derivative(const std::function<AltTensor(const Vec&)>& f, const Vec& g, double h = 1e-3);

/// 4th-order central difference of a matrix-valued map along direction `dir`.
Mat fd_directional(const std::function<Mat(const Vec&)>& f, const Vec& g, const Vec& dir, double h = 1e-3);

/// Product on the symplectic groupoid of a Poisson manifold: solves
/// dk/dt = -Π♯_{k}((dτ_k)^T φ^t(a)), k_0 = b with `steps` RK4 steps.
/// `omega` must evaluate the symplectic form of the cotangent groupoid.
struct MultiplyOptions {
  int steps = 32;
  double composability_tol = 1e-9;
};
Vec multiply_poisson(const MultFormEvaluator& omega, const Vec& a, const Vec& b, const MultiplyOptions& opt = {});

/// f(g) = ∫_0^1 δ(φ^t g) dt for a fiberwise-linear δ.
double integrate_cocycle(const SprayGroupoid& G, const Expr& delta, const Vec& g, const QuadratureRule& rule);

/// (l(a), ν(a)) = (u^*(i_a ω), u^*(i_a dω)) at a unit, for each frame section.
struct UnitsDerivative {
  std::vector<AltTensor> l;
  std::vector<AltTensor> nu;
};
UnitsDerivative differentiate_at_units(const AltTensor& omega, const AltTensor& domega, int n, int r);
UnitsDerivative differentiate_at_units(const MultFormEvaluator& M, const Vec& x);

/// max over sections of |recovered - expected| for IM data evaluated at x.
double units_round_trip_residual(const UnitsDerivative& got, const IMFormData& expected, std::span<const double> x);

/// ‖(1/t) m_t^*ω_a - Λ_a‖ on a ladder of t and the fitted log-log slope.
struct LinearizationResult {
  std::vector<double> t;
  std::vector<double> error;
  double slope = 0.0;
  bool exact = false;  // every error below 1e-13; the slope is then undefined
};
LinearizationResult linearization_check(const MultFormEvaluator& M, const Vec& a,
                                        const std::vector<double>& ladder = {0.1, 0.05, 0.025, 0.0125});

/// Value of a multiplicative k-form at the unit over a base point from its
/// l-component alone:
///   ω(a_1..a_j, v_1..v_{k-j}) = (1/j) Σ_i (-1)^{i-1} l(a_i)(ρa_1, .., ρa_i omitted, .., ρa_j, v_1..v_{k-j}).
/// `rho` is the n x r anchor matrix at the base point, `l[j]` the (k-1)-form l(e_j).
AltTensor units_form_predictor(const Mat& rho, const std::vector<AltTensor>& l, int k);
double units_form_predictor(const Mat& rho, const std::vector<AltTensor>& l, int k, const Mat& vs);

/// Least-squares slope of log(error) against log(h).
double fit_order(const std::vector<double>& h, const std::vector<double>& error);

}  // namespace mulform
