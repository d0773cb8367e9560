#pragma once

// Pointwise exterior algebra. Components are stored on strictly increasing
// multi-indices; evaluation uses the determinant convention
// (dx1 ^ dx2)(e1, e2) = 1, with no factorial normalization.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mulform/multi_index.hpp"

namespace mulform {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::span<const double> as_span(const Vec& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }
inline std::vector<double> as_vector(const Vec& x) { return {x.data(), x.data() + x.size()}; }

/// Alternating k-tensor on R^d. The same storage serves for multivectors.
class AltTensor {
 public:
  AltTensor() = default;
  AltTensor(int dim, int degree);

  static AltTensor scalar(int dim, double value);
  static AltTensor covector(const Vec& c);
  /// dx^{i1} ^ ... ^ dx^{ik} for arbitrary (possibly unsorted) indices.
  static AltTensor basis(int dim, const std::vector<int>& idx);
  /// 2-tensor with components Ω_ij (only i<j entries are read).
  static AltTensor from_matrix(const Mat& omega);

  int dim() const { return dim_; }
  int degree() const { return deg_; }
  std::size_t size() const { return c_.size(); }

  /// Component on the k-th multi-index in lexicographic order.
  double& at(std::size_t pos) { return c_[pos]; }
  double at(std::size_t pos) const { return c_[pos]; }
  double& at_mask(Mask m) { return c_[static_cast<std::size_t>(multi_index_position(dim_, m))]; }
  double at_mask(Mask m) const { return c_[static_cast<std::size_t>(multi_index_position(dim_, m))]; }
  /// Signed component for any index tuple (0 on repeats).
  double component(const std::vector<int>& idx) const;
  const std::vector<double>& data() const { return c_; }

  /// Skew matrix Ω_ij = a(e_i, e_j) of a 2-tensor.
  Mat to_matrix() const;

  /// a(v_1, ..., v_k) with the vectors as columns of `vs` (d x k).
  double evaluate(const Mat& vs) const;

  double max_abs() const;

  AltTensor& operator+=(const AltTensor& b);
  AltTensor& operator-=(const AltTensor& b);
  AltTensor& operator*=(double s);
  friend AltTensor operator+(AltTensor a, const AltTensor& b) { return a += b; }
  friend AltTensor operator-(AltTensor a, const AltTensor& b) { return a -= b; }
  friend AltTensor operator*(double s, AltTensor a) { return a *= s; }
  friend AltTensor operator-(AltTensor a) { return a *= -1.0; }

 private:
  int dim_ = 0;
  int deg_ = 0;
  std::vector<double> c_;
};

AltTensor wedge(const AltTensor& a, const AltTensor& b);

/// (i_v a)(w_2, ..., w_k) = a(v, w_2, ..., w_k).
AltTensor interior(const Vec& v, const AltTensor& a);

/// (J^* a)(v_1, ..., v_k) = a(J v_1, ..., J v_k) for J : R^{d_in} -> R^{d_out}.
AltTensor pullback(const AltTensor& a, const Mat& J);

/// Π♯ = (ω♭)^{-1} for a nondegenerate 2-tensor, where ω♭(X) = i_X ω.
/// Throws DegeneracyError when the reciprocal condition number is below `rcond_min`.
Mat invert_2form(const AltTensor& a, double rcond_min = 1e-12);

/// Smallest singular value of a matrix.
double sigma_min(const Mat& m);

}  // namespace mulform
