#pragma once

// End-to-end constructions: symplectic groupoids of Poisson manifolds, the
// L-tensor of a Poisson-Nijenhuis pair, holomorphic and generalized-complex
// identities, twisted Dirac structures and the contact groupoid of a Jacobi
// structure. Every builder returns a CheckReport with named residuals.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mulform/groupoid.hpp"

namespace mulform {

struct ScenarioOptions {
  QuadratureKind quadrature = QuadratureKind::Simpson;
  int quadrature_n = 64;
  int steps_per_unit = 64;
  int samples = 100;            // points for pointwise residuals
  int pair_samples = 100;       // composable pairs (multiplicativity)
  int triple_samples = 50;      // composable triples (associativity)
  int multiply_steps = 32;
  std::uint64_t seed = 1;
  double fiber_radius = 0.5;
  double base_fraction = 0.5;
  double nondegeneracy_min = 1e-3;
  bool multiplication_checks = true;

  QuadratureRule rule() const;
};

/// Point of the validity box, sampled uniformly.
Vec sample_validity(const SprayGroupoid& G, SplitMix64& rng);

// ---------------------------------------------------------------- Poisson

struct SymplecticGroupoid {
  BivectorField pi;
  std::shared_ptr<SprayGroupoid> G;
  std::shared_ptr<MultFormEvaluator> omega;
  CheckReport report;

  /// Π♯ = (ω♭)^{-1} at g.
  Mat Pi_sharp(const Vec& g) const;
};

/// Throws PreconditionError("poisson_identity") when [π,π] does not vanish.
/// With `run_checks` the report holds realization, multiplicativity,
/// associativity, inversion, units-formula, closedness and round-trip residuals.
SymplecticGroupoid build_symplectic_groupoid(const BivectorField& pi, const Box& box, const ScenarioOptions& opt,
                                             bool run_checks = true);

/// Matrix of a (1,1)-tensor field: entry (i, j) at l[i*n + j]; acts on the
/// covector coordinates of A = T*M by p ↦ l p.
struct TensorField11 {
  int n = 0;
  std::vector<Expr> m;

  const Expr& operator()(int i, int j) const { return m[static_cast<std::size_t>(i * n + j)]; }
  Mat eval(std::span<const double> x) const;
  TensorField11 power(int k) const;
  static TensorField11 identity(int n, double scale = 1.0);
};

/// The closed IM-2-form (-l, 0) of T*M: l(e_j) = -Σ_i l_ij dx^i.
IMFormData nijenhuis_im_pair(const TensorField11& l);

/// Evaluator of ω_{(-l,0)} on the groupoid of π.
std::shared_ptr<MultFormEvaluator> omega_L(const SymplecticGroupoid& S, const TensorField11& l);

/// L = (ω♭)^{-1} ∘ (ω_L)♭, that is Ω^{-1} Ω_L in matrix form.
Mat L_tensor(const AltTensor& omega, const AltTensor& omega_l);

/// Nijenhuis torsion of the tangent-bundle tensor N = l^T at x on coordinate
/// vectors: T(u,v) = (D_{Nu}N)v - (D_{Nv}N)u - N((D_u N)v - (D_v N)u).
Vec nijenhuis_torsion(const TensorField11& l, std::span<const double> x, const Vec& u, const Vec& v);
/// Same for a numerical matrix field A(g) acting on tangent vectors, by finite differences.
Vec nijenhuis_torsion_fd(const std::function<Mat(const Vec&)>& A, const Vec& g, const Vec& u, const Vec& v,
                         double h = 1e-3);

/// The 2-form-valued ν of (-l², -T_l): ν(e_j)(u, v) = -⟨dx^j, T(u, v)⟩ at x.
std::vector<AltTensor> torsion_im_values(const TensorField11& l, std::span<const double> x);

struct NijenhuisOptions {
  double symmetry_tol = 1e-9;
  double cocycle_tol = 1e-8;
  double tol = 1e-6;
};

/// π-symmetry and IM cocycle prechecks, L at units, σ-relatedness, the two
/// routes to ω_{L^k}, σ-pushforwards of Π_{L^k}, the torsion identity and the
/// units derivative of ω_{L²}.
CheckReport nijenhuis_checks(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt,
                             const NijenhuisOptions& nopt = {});

/// Pointwise torsion identity
///   i_{T_A(u,v)}Ω = (i_v i_{Au} + i_{Av} i_u) dΩ_A - i_{Av} i_{Au} dΩ - i_v i_u dΩ_{A²}
/// with Ω = ω and A = L, at sampled points and all coordinate pairs.
CheckReport torsion_identity_check(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt,
                                   int samples);

/// Holomorphic pair: ω_{L²} + ω = 0 and dω_{L²} = 0.
CheckReport holomorphic_checks(const SymplecticGroupoid& S, const TensorField11& l, const ScenarioOptions& opt);

/// Generalized complex triple (π, l, ϖ): precheck N² + π♯ϖ♭ = -Id with N = l^T,
/// then ω + ω_{L²} = τ^*ϖ - σ^*ϖ.
CheckReport gcs_identity_check(const SymplecticGroupoid& S, const TensorField11& l, const FormField& varpi,
                               const ScenarioOptions& opt, double precheck_tol = 1e-9);

/// Quadrature of the exact pair of ϖ against τ^*ϖ - σ^*ϖ, plus its units round trip.
CheckReport exact_form_checks(std::shared_ptr<SprayGroupoid> G, const FormField& varpi, const ScenarioOptions& opt);

// ---------------------------------------------------------------- Dirac

struct DiracScenario {
  std::shared_ptr<const DiracFrame> frame;
  std::shared_ptr<SprayGroupoid> G;
  std::shared_ptr<MultFormEvaluator> omega;
  CheckReport report;
};

/// `graph_form` (optional) is a closed ϖ with L = graph(ϖ); then ω = σ^*ϖ - τ^*ϖ is also checked.
DiracScenario build_dirac(std::shared_ptr<const DiracFrame> frame, const Box& box, const ScenarioOptions& opt,
                          const FormField* graph_form = nullptr, bool run_checks = true);

/// Principal-angle distance (sine of the largest angle) between column spans.
double subspace_distance(const Mat& a, const Mat& b);

// ---------------------------------------------------------------- Jacobi

struct JacobiScenario {
  BivectorField pi;
  VectorField R;
  std::shared_ptr<SprayGroupoid> G;
  std::shared_ptr<MultFormEvaluator> omega;
  Expr cocycle;
  CheckReport report;
};

JacobiScenario build_jacobi(const BivectorField& pi, const VectorField& R, const Box& box, const ScenarioOptions& opt,
                            bool run_checks = true);

/// Closed form of ω for π = 0, R = c ∂x on R at (x, u, p), when applicable.
std::optional<AltTensor> jacobi_line_closed_form(const JacobiScenario& J, const Vec& g);

/// |ω ∧ (dω)^n| on the (2n+1)-dimensional chart.
double contact_margin(const AltTensor& omega, const AltTensor& domega);

// ---------------------------------------------------------------- convergence

struct ConvergenceRow {
  std::string axis;  // "quadrature" or "ode"
  int N = 0;
  double h = 0.0;
  double error = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  double quadrature_order = 0.0;
  double ode_order = 0.0;
  bool quadrature_exact = false;
  bool ode_exact = false;
  std::string reference;  // "closed_form" or "finest"
};

/// Builds an evaluator for a given quadrature rule and RK4 steps per unit.
using EvaluatorFactory = std::function<std::shared_ptr<MultFormEvaluator>(const QuadratureRule&, int steps_per_unit)>;

/// Quadrature axis: Simpson with N intervals and fine RK4 steps. ODE axis: a
/// fixed 2-interval rule, so the grid does not pin the step count, with N
/// steps per unit. Errors are max |ω_N - ω_ref| over the points, against
/// `oracle` when given and the finest level otherwise.
ConvergenceResult convergence_study(const EvaluatorFactory& make, const std::vector<Vec>& points,
                                    const std::vector<int>& ladder,
                                    const std::function<AltTensor(const Vec&)>& oracle = nullptr,
                                    int fine_steps = 1024);

}  // namespace mulform
