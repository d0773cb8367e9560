#pragma once

// IM-forms (l, ν), Spencer data (l, D) and their linear forms Λ on the total
// space of the algebroid:  Λ = Σ_j y^j D_j + Σ_j dy^j ∧ l_j  with D = dl + ν.

#include <cstdint>
#include <vector>

#include "mulform/algebroid.hpp"

namespace mulform {

/// l_j of degree k-1 and D_j of degree k on the base, one per frame section e_j.
struct SpencerData {
  int k = 0;
  int n = 0;
  int r = 0;
  std::vector<FormField> l;
  std::vector<FormField> D;
};

struct IMFormData {
  int k = 0;
  int n = 0;
  int r = 0;
  std::vector<FormField> l;   // degree k-1
  std::vector<FormField> nu;  // degree k

  static IMFormData zero(int k, int n, int r);
  /// D_j = d l_j + ν_j.
  SpencerData spencer() const;
};

/// Fiberwise-linear k-form on R^{n+r}.
struct LinearForm {
  int n = 0;
  int r = 0;
  FormField form;

  int degree() const { return form.degree(); }
  int total_dim() const { return n + r; }
};

/// Same components, regarded as a form on R^{total_dim} (base indices first).
FormField lift(const FormField& base, int total_dim);

LinearForm linear_form(const SpencerData& s);
LinearForm linear_form(const IMFormData& d);

/// l_j = j^*(i_{∂y_j} Λ) and D_j = e_j^*(Λ) at the base point x.
struct RecoveredSpencer {
  std::vector<AltTensor> l;
  std::vector<AltTensor> D;
};
RecoveredSpencer recover(const LinearForm& L, std::span<const double> x);

/// (l, ν) ↦ (ν, 0).
IMFormData d_IM(const IMFormData& d);

/// The canonical closed IM-2-form (-id, 0) of T*M, whose linear form is ω0 = Σ dx^i ∧ dp_i.
IMFormData canonical_poisson_pair(int n);

/// (ϖ♭∘ρ, (dϖ)♭∘ρ) for a k-form ϖ on the base.
IMFormData exact_pair(const AlgebroidChart& A, const FormField& varpi);

/// The canonical IM-2-form (-ρ̄, H♭∘ρ) of a Dirac chart: l(e_i) = -α_i, ν(e_i) = i_{v_i} H.
IMFormData dirac_pair(const AlgebroidChart& A);

/// Λ = du - Σ p_i dx^i on the Jacobi chart (x; u, p) of dimension 2n+1.
LinearForm jacobi_linear_form(int n);
/// Its Spencer data: l(e_0) = 1, l(e_i) = 0, D(e_0) = 0, D(e_i) = -dx^i.
SpencerData jacobi_spencer(int n);

/// Residuals of the three IM equations on all frame pairs at sampled points.
CheckReport im_residuals(const AlgebroidChart& A, const IMFormData& d, int samples, std::uint64_t seed = 1,
                         double tol = 1e-9);

/// Homogeneity degree in the fiber variables (indices >= n): kAnyDegree for the
/// zero expression and kNotHomogeneous when there is none.
constexpr int kAnyDegree = 1000;
constexpr int kNotHomogeneous = -1000;
int fiber_degree(const Expr& e, int n);

/// Symbolic fiber-degree count plus numerical m_t^*Λ = tΛ for t ∈ {0.5, 2},
/// recovery round trip against `source` (when given) and the Leibniz rule
/// D(x_l e_j) = x_l D(e_j) + dx_l ∧ l(e_j).
CheckReport linear_form_checks(const LinearForm& L, const SpencerData* source, const Box& box, int samples,
                               std::uint64_t seed = 1, double fiber_radius = 1.0);

}  // namespace mulform
