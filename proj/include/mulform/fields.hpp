#pragma once

// Symbolic fields on a coordinate chart: component expressions indexed by
// strictly increasing multi-indices, with exact exterior calculus.

#include <span>
#include <vector>

#include "mulform/expr.hpp"
#include "mulform/tensor.hpp"

namespace mulform {

class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::vector<Expr> components) : c_(std::move(components)) {}
  static VectorField zero(int dim) { return VectorField(std::vector<Expr>(static_cast<std::size_t>(dim))); }

  int dim() const { return static_cast<int>(c_.size()); }
  const Expr& operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
  Expr& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  const std::vector<Expr>& components() const { return c_; }
  Vec eval(std::span<const double> x) const;

 private:
  std::vector<Expr> c_;
};

class FormField {
 public:
  FormField() = default;
  FormField(int dim, int degree);

  static FormField scalar(int dim, const Expr& f);
  /// f dx^{i1} ^ ... ^ dx^{ik} (indices in any order).
  static FormField monomial(int dim, const Expr& f, const std::vector<int>& idx);

  int dim() const { return dim_; }
  int degree() const { return deg_; }
  std::size_t size() const { return c_.size(); }
  Expr& at(std::size_t pos) { return c_[pos]; }
  const Expr& at(std::size_t pos) const { return c_[pos]; }
  Expr& at_mask(Mask m) { return c_[static_cast<std::size_t>(multi_index_position(dim_, m))]; }
  const Expr& at_mask(Mask m) const { return c_[static_cast<std::size_t>(multi_index_position(dim_, m))]; }
  Expr component(const std::vector<int>& idx) const;
  const std::vector<Expr>& components() const { return c_; }

  bool is_zero() const;
  AltTensor eval(std::span<const double> x) const;

  FormField& operator+=(const FormField& b);
  FormField& operator-=(const FormField& b);
  friend FormField operator+(FormField a, const FormField& b) { return a += b; }
  friend FormField operator-(FormField a, const FormField& b) { return a -= b; }
  friend FormField operator*(const Expr& f, const FormField& a);
  friend FormField operator-(const FormField& a) { return Expr(-1.0) * a; }

 private:
  int dim_ = 0;
  int deg_ = 0;
  std::vector<Expr> c_;
};

/// Bivector field stored on i<j; π(i,j) = -π(j,i).
class BivectorField {
 public:
  BivectorField() = default;
  explicit BivectorField(int dim);

  int dim() const { return dim_; }
  /// Signed component π^{ij}.
  Expr operator()(int i, int j) const;
  void set(int i, int j, const Expr& e);
  /// Matrix P_ij = π^{ij}.
  Mat eval(std::span<const double> x) const;

 private:
  int dim_ = 0;
  std::vector<Expr> upper_;
};

FormField exterior_derivative(const FormField& w);
FormField interior(const VectorField& v, const FormField& w);
FormField lie_derivative(const VectorField& v, const FormField& w);
FormField wedge(const FormField& a, const FormField& b);

/// Schouten bracket of two bivectors at a point, as a trivector.
/// Normalization: [π,π]^{ijk} = 2 Σ_cyc π^{il} ∂_l π^{jk}.
AltTensor schouten(const BivectorField& p, const BivectorField& q, std::span<const double> x);

/// [π, R] = -L_R π at a point, as a bivector.
AltTensor schouten(const BivectorField& p, const VectorField& r, std::span<const double> x);

/// R ^ π at a point: (R^π)^{ijk} = R^i π^{jk} + R^j π^{ki} + R^k π^{ij}.
AltTensor wedge(const VectorField& r, const BivectorField& p, std::span<const double> x);

}  // namespace mulform
