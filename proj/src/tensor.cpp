#include "mulform/tensor.hpp"

#include <cmath>

#include "mulform/errors.hpp"

namespace mulform {

AltTensor::AltTensor(int dim, int degree) : dim_(dim), deg_(degree) {
  if (dim < 0 || dim > kMaxDim || degree < 0) throw ShapeError("invalid tensor shape");
  // Degree above the dimension gives the (empty) zero tensor.
  c_.assign(static_cast<std::size_t>(binomial(dim, degree)), 0.0);
}

AltTensor AltTensor::scalar(int dim, double value) {
  AltTensor t(dim, 0);
  t.c_[0] = value;
  return t;
}

AltTensor AltTensor::covector(const Vec& c) {
  AltTensor t(static_cast<int>(c.size()), 1);
  for (int i = 0; i < c.size(); ++i) t.c_[static_cast<std::size_t>(i)] = c[i];
  return t;
}

AltTensor AltTensor::basis(int dim, const std::vector<int>& idx) {
  AltTensor t(dim, static_cast<int>(idx.size()));
  for (int i : idx)
    if (i < 0 || i >= dim) throw ShapeError("basis index out of range");
  Mask m = 0;
  const int s = sort_sign(idx, m);
  if (s != 0) t.at_mask(m) = s;
  return t;
}

AltTensor AltTensor::from_matrix(const Mat& omega) {
  if (omega.rows() != omega.cols()) throw ShapeError("from_matrix: matrix not square");
  const int d = static_cast<int>(omega.rows());
  AltTensor t(d, 2);
  const auto& tab = multi_indices(d, 2);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) t.c_[p] = omega(tab.indices[p][0], tab.indices[p][1]);
  return t;
}

double AltTensor::component(const std::vector<int>& idx) const {
  if (static_cast<int>(idx.size()) != deg_) throw ShapeError("component: wrong number of indices");
  Mask m = 0;
  const int s = sort_sign(idx, m);
  return s == 0 ? 0.0 : s * at_mask(m);
}

Mat AltTensor::to_matrix() const {
  if (deg_ != 2) throw ShapeError("to_matrix requires degree 2");
  Mat m = Mat::Zero(dim_, dim_);
  const auto& tab = multi_indices(dim_, 2);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    const int i = tab.indices[p][0];
    const int j = tab.indices[p][1];
    m(i, j) = c_[p];
    m(j, i) = -c_[p];
  }
  return m;
}

double AltTensor::evaluate(const Mat& vs) const {
  if (vs.rows() != dim_ || vs.cols() != deg_) throw ShapeError("evaluate: expected a d x k matrix of vectors");
  if (deg_ == 0) return c_[0];
  const auto& tab = multi_indices(dim_, deg_);
  double sum = 0.0;
  Mat sub(deg_, deg_);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    if (c_[p] == 0.0) continue;
    for (int r = 0; r < deg_; ++r) sub.row(r) = vs.row(tab.indices[p][static_cast<std::size_t>(r)]);
    sum += c_[p] * sub.determinant();
  }
  return sum;
}

double AltTensor::max_abs() const {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

AltTensor& AltTensor::operator+=(const AltTensor& b) {
  if (b.dim_ != dim_ || b.deg_ != deg_) throw ShapeError("AltTensor sum: shape mismatch");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += b.c_[i];
  return *this;
}

AltTensor& AltTensor::operator-=(const AltTensor& b) {
  if (b.dim_ != dim_ || b.deg_ != deg_) throw ShapeError("AltTensor difference: shape mismatch");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= b.c_[i];
  return *this;
}

AltTensor& AltTensor::operator*=(double s) {
  for (double& v : c_) v *= s;
  return *this;
}

AltTensor wedge(const AltTensor& a, const AltTensor& b) {
  if (a.dim() != b.dim()) throw ShapeError("wedge: dimension mismatch");
  const int d = a.dim();
  if (a.degree() + b.degree() > d) throw ShapeError("wedge: total degree exceeds dimension");
  AltTensor out(d, a.degree() + b.degree());
  const auto& ta = multi_indices(d, a.degree());
  const auto& tb = multi_indices(d, b.degree());
  for (std::size_t p = 0; p < ta.masks.size(); ++p) {
    if (a.at(p) == 0.0) continue;
    const Mask ma = ta.masks[p];
    for (std::size_t q = 0; q < tb.masks.size(); ++q) {
      const Mask mb = tb.masks[q];
      if ((ma & mb) || b.at(q) == 0.0) continue;
      // Shuffle sign: count pairs (i in A, j in B) with i > j.
      int inv = 0;
      for (int j : tb.indices[q]) inv += popcount(ma & ~((Mask{2} << j) - 1));
      out.at_mask(ma | mb) += (inv % 2 ? -1.0 : 1.0) * a.at(p) * b.at(q);
    }
  }
  return out;
}

AltTensor interior(const Vec& v, const AltTensor& a) {
  if (a.degree() < 1) throw ShapeError("interior: degree 0 input");
  if (v.size() != a.dim()) throw ShapeError("interior: dimension mismatch");
  const int d = a.dim();
  AltTensor out(d, a.degree() - 1);
  const auto& tab = multi_indices(d, a.degree());
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    if (a.at(p) == 0.0) continue;
    const auto& idx = tab.indices[p];
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const double sign = s % 2 ? -1.0 : 1.0;
      out.at_mask(tab.masks[p] & ~(Mask{1} << idx[s])) += sign * v[idx[s]] * a.at(p);
    }
  }
  return out;
}

AltTensor pullback(const AltTensor& a, const Mat& J) {
  if (J.rows() != a.dim()) throw ShapeError("pullback: map codomain does not match tensor dimension");
  const int din = static_cast<int>(J.cols());
  const int k = a.degree();
  if (k > din) throw ShapeError("pullback: degree exceeds source dimension");
  if (k == 0) return AltTensor::scalar(din, a.at(0));
  if (k == 2) return AltTensor::from_matrix(J.transpose() * a.to_matrix() * J);
  AltTensor out(din, k);
  const auto& tin = multi_indices(din, k);
  for (std::size_t q = 0; q < tin.masks.size(); ++q) {
    Mat cols(J.rows(), k);
    for (int c = 0; c < k; ++c) cols.col(c) = J.col(tin.indices[q][static_cast<std::size_t>(c)]);
    out.at(q) = a.evaluate(cols);
  }
  return out;
}

double sigma_min(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().minCoeff();
}

Mat invert_2form(const AltTensor& a, double rcond_min) {
  const Mat omega = a.to_matrix();
  Eigen::JacobiSVD<Mat> svd(omega, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double smin = s.size() ? s.minCoeff() : 0.0;
  const double smax = s.size() ? s.maxCoeff() : 0.0;
  if (!(smin > rcond_min * smax) || smin == 0.0) throw DegeneracyError("2-form is degenerate", smin);
  // ω♭ = Ωᵀ = -Ω, so Π♯ = -Ω^{-1}.
  return -(svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose());
}

}  // namespace mulform
