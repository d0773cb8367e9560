#pragma once

// Lie algebroids over a coordinate box, presented by an anchor matrix and
// structure functions of a frame: [e_a, e_b] = c_ab^k e_k, ρ(e_a) = ρ^m_a ∂_m.
// Total-space coordinates are (x1..xn, y1..yr) with y dual to the frame.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mulform/fields.hpp"
#include "mulform/flow.hpp"
#include "mulform/report.hpp"
#include "mulform/rng.hpp"

namespace mulform {

/// Pointwise structure functions, flattened as c[(a*r + b)*r + k] and
/// gradients as dc[l*r^3 + (a*r + b)*r + k] = ∂_l c_ab^k.
class StructureFunctions {
 public:
  StructureFunctions(int base_dim, int rank) : n_(base_dim), r_(rank) {}
  virtual ~StructureFunctions() = default;

  int base_dim() const { return n_; }
  int rank() const { return r_; }

  virtual void eval(std::span<const double> x, std::vector<double>& c) const = 0;
  virtual void eval_gradient(std::span<const double> x, std::vector<double>& c, std::vector<double>& dc) const = 0;
  /// Residual of the bracket against its own Leibniz rule, where the
  /// presentation makes that an independent check (0 otherwise).
  virtual double leibniz_residual(std::span<const double>) const { return 0.0; }

 private:
  int n_;
  int r_;
};

/// Symbolic structure functions; c_ba^k = -c_ab^k by construction.
class ExprStructureFunctions : public StructureFunctions {
 public:
  /// `upper[(a*r + b)*r + k]` is read for a < b only.
  ExprStructureFunctions(int base_dim, int rank, std::vector<Expr> upper);

  const Expr& c(int a, int b, int k) const { return c_[static_cast<std::size_t>((a * rank() + b) * rank() + k)]; }
  void eval(std::span<const double> x, std::vector<double>& c) const override;
  void eval_gradient(std::span<const double> x, std::vector<double>& c, std::vector<double>& dc) const override;

 private:
  std::vector<Expr> c_;
  Program value_;
  Program gradient_;
};

/// Frame e_i = v_i + α_i of a Dirac structure L ⊂ TM ⊕ T*M with background 3-form H.
struct DiracFrame {
  std::vector<VectorField> v;
  std::vector<FormField> alpha;  // 1-forms
  FormField H;                   // 3-form (degree 0 placeholder when n < 3 or H = 0)

  int base_dim() const { return v.empty() ? 0 : v[0].dim(); }
  int rank() const { return static_cast<int>(v.size()); }
  bool has_H() const;
};

/// Structure functions of a Dirac frame from pointwise least squares against
/// the H-twisted Courant bracket ⟦v+α, w+β⟧ = [v,w] + L_v β - i_w dα + i_w i_v H.
class DiracStructureFunctions : public StructureFunctions {
 public:
  explicit DiracStructureFunctions(std::shared_ptr<const DiracFrame> frame);

  void eval(std::span<const double> x, std::vector<double>& c) const override;
  void eval_gradient(std::span<const double> x, std::vector<double>& c, std::vector<double>& dc) const override;
  double leibniz_residual(std::span<const double> x) const override;

  /// max |E c - B| over frame pairs: zero exactly when the frame closes under the bracket.
  double involutivity_residual(std::span<const double> x) const;
  /// max |α_i(v_j) + α_j(v_i)|.
  double lagrangian_residual(std::span<const double> x) const;
  /// Smallest singular value of the 2n x r frame matrix.
  double independence_margin(std::span<const double> x) const;

 private:
  void solve(std::span<const double> x, std::vector<double>& c, Mat* E_out, std::vector<Vec>* B_out) const;

  std::shared_ptr<const DiracFrame> frame_;
  Program frame_prog_;        // E column-major: E(row, i) at i*2n + row
  Program bracket_prog_;      // B_ab at (a*r + b)*2n + row
  Program frame_grad_prog_;   // ∂_l E at l*(2n*r) + ...
  Program bracket_grad_prog_;
  Program leibniz_prog_;      // ⟦e_a, x_l e_b⟧ - x_l ⟦e_a, e_b⟧ - ρ(e_a)(x_l) e_b
  Program pairing_prog_;
};

struct AlgebroidChart {
  int n = 0;  // base dimension
  int r = 0;  // rank
  Box box;    // base box
  std::vector<Expr> anchor;  // anchor[m*r + a] = ρ^m_a(x)
  std::shared_ptr<const StructureFunctions> structure;
  std::string family = "raw";

  // Source data, when the chart comes from a builder.
  BivectorField pi;
  VectorField reeb;
  std::shared_ptr<const DiracFrame> dirac;

  const Expr& rho(int m, int a) const { return anchor[static_cast<std::size_t>(m * r + a)]; }
  VectorField anchor_field(int a) const;  // ρ(e_a)
  Mat anchor_matrix(std::span<const double> x) const;
  int total_dim() const { return n + r; }
};

AlgebroidChart raw_algebroid(int n, int r, std::vector<Expr> anchor, std::vector<Expr> upper_structure, Box box);

/// T*M with the Koszul bracket: ρ = π♯ (ρ^m_i = π^{im}), c_ij^k = ∂_k π^{ij}.
AlgebroidChart cotangent_algebroid(const BivectorField& pi, Box box);

/// Dirac structure from a frame. Rejects non-Lagrangian, dependent or
/// non-involutive frames (PreconditionError) at `samples` seeded points.
AlgebroidChart dirac_algebroid(std::shared_ptr<const DiracFrame> frame, Box box, int samples = 64,
                               std::uint64_t seed = 1);

/// J^1 L ≅ R × T*M for a trivialized Jacobi structure (π, R); frame e_0 = (1, 0),
/// e_i = (0, dx^i), fiber coordinates (u, p). Requires [π,π] = 2R∧π and [π,R] = 0.
AlgebroidChart jacobi_algebroid(const BivectorField& pi, const VectorField& R, Box box, int samples = 32,
                                std::uint64_t seed = 1, double tol = 1e-9);

/// Residuals of the Jacobi compatibility conditions at a point.
struct JacobiCompatibility {
  double pi_pi = 0.0;  // |[π,π] - 2R∧π|
  double pi_R = 0.0;   // |[π,R]|
};
JacobiCompatibility jacobi_compatibility(const BivectorField& pi, const VectorField& R, std::span<const double> x);

/// Random point of a box; infinite sides are sampled from [-1, 1].
Vec sample_point(const Box& box, SplitMix64& rng);

/// Total-space point with base in `box` and fiber in [-radius, radius]^r.
Vec sample_total(const Box& box, int r, double radius, SplitMix64& rng);

CheckReport check_algebroid(const AlgebroidChart& A, int samples, std::uint64_t seed = 1);

/// Vector field on the total space R^{n+r}, components in (x, y).
struct Spray {
  int n = 0;
  int r = 0;
  std::vector<Expr> components;

  VectorFieldEvaluator evaluator(const Expr& accumulator_rate = Expr()) const {
    return VectorFieldEvaluator(components, accumulator_rate);
  }
};

/// V(x, y) = (ρ(x) y, -Γ^k_ab(x) y^a y^b). `christoffel` (optional) holds
/// Γ^k_ab at (k*r + a)*r + b.
Spray default_spray(const AlgebroidChart& A, const std::vector<Expr>* christoffel = nullptr);

/// (i) base part equals ρ(x)y, (ii) φ^s(m_t a) = m_t φ^{st}(a) for t ∈ {0.5, 2}, s ∈ {0.25, 0.5}.
CheckReport check_spray(const Spray& V, const AlgebroidChart& A, int samples, std::uint64_t seed = 1,
                        double fiber_radius = 0.5);

/// Fiberwise-linear cocycle R̃(x, u, p) = Σ R^i(x) p_i on the Jacobi chart.
Expr jacobi_cocycle(const AlgebroidChart& A);

/// w(t_j) = exp(-∫_0^{t_j} R̃(φ^s a) ds) from a trajectory whose accumulator rate is R̃.
std::vector<double> transport_weight(const Trajectory& traj);

}  // namespace mulform
