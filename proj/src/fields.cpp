#include "mulform/fields.hpp"

#include "mulform/errors.hpp"

namespace mulform {

Vec VectorField::eval(std::span<const double> x) const {
  Vec v(dim());
  for (int i = 0; i < dim(); ++i) v[i] = c_[static_cast<std::size_t>(i)].eval(x);
  return v;
}

FormField::FormField(int dim, int degree) : dim_(dim), deg_(degree) {
  const int n = binomial(dim, degree);
  if (n == 0) throw ShapeError("form degree " + std::to_string(degree) + " exceeds dimension " + std::to_string(dim));
  c_.assign(static_cast<std::size_t>(n), Expr());
}

FormField FormField::scalar(int dim, const Expr& f) {
  FormField w(dim, 0);
  w.c_[0] = f;
  return w;
}

FormField FormField::monomial(int dim, const Expr& f, const std::vector<int>& idx) {
  FormField w(dim, static_cast<int>(idx.size()));
  Mask m = 0;
  const int s = sort_sign(idx, m);
  if (s != 0) w.at_mask(m) = s > 0 ? f : -f;
  return w;
}

Expr FormField::component(const std::vector<int>& idx) const {
  Mask m = 0;
  const int s = sort_sign(idx, m);
  if (s == 0) return Expr();
  return s > 0 ? at_mask(m) : -at_mask(m);
}

bool FormField::is_zero() const {
  for (const Expr& e : c_)
    if (!e.is_zero()) return false;
  return true;
}

AltTensor FormField::eval(std::span<const double> x) const {
  AltTensor t(dim_, deg_);
  for (std::size_t p = 0; p < c_.size(); ++p) t.at(p) = c_[p].eval(x);
  return t;
}

FormField& FormField::operator+=(const FormField& b) {
  if (b.dim_ != dim_ || b.deg_ != deg_) throw ShapeError("form sum: shape mismatch");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += b.c_[i];
  return *this;
}

FormField& FormField::operator-=(const FormField& b) {
  if (b.dim_ != dim_ || b.deg_ != deg_) throw ShapeError("form difference: shape mismatch");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= b.c_[i];
  return *this;
}

FormField operator*(const Expr& f, const FormField& a) {
  FormField out(a.dim_, a.deg_);
  for (std::size_t i = 0; i < a.c_.size(); ++i) out.c_[i] = f * a.c_[i];
  return out;
}

BivectorField::BivectorField(int dim) : dim_(dim) {
  upper_.assign(static_cast<std::size_t>(binomial(dim, 2)), Expr());
}

Expr BivectorField::operator()(int i, int j) const {
  if (i == j) return Expr();
  const Expr& e = upper_[static_cast<std::size_t>(multi_index_position(dim_, (Mask{1} << i) | (Mask{1} << j)))];
  return i < j ? e : -e;
}

void BivectorField::set(int i, int j, const Expr& e) {
  if (i == j) throw ShapeError("bivector diagonal component must vanish");
  upper_[static_cast<std::size_t>(multi_index_position(dim_, (Mask{1} << i) | (Mask{1} << j)))] = i < j ? e : -e;
}

Mat BivectorField::eval(std::span<const double> x) const {
  Mat p = Mat::Zero(dim_, dim_);
  const auto& tab = multi_indices(dim_, 2);
  for (std::size_t q = 0; q < tab.masks.size(); ++q) {
    const double v = upper_[q].eval(x);
    p(tab.indices[q][0], tab.indices[q][1]) = v;
    p(tab.indices[q][1], tab.indices[q][0]) = -v;
  }
  return p;
}

FormField exterior_derivative(const FormField& w) {
  const int d = w.dim();
  const int k = w.degree();
  if (k >= d) throw ShapeError("exterior derivative: degree must be below dimension");
  FormField out(d, k + 1);
  const auto& tab = multi_indices(d, k);
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    const Expr& f = w.at(p);
    if (f.is_constant()) continue;
    const Mask m = tab.masks[p];
    for (int j = 0; j < d; ++j) {
      if (m & (Mask{1} << j)) continue;
      const Expr df = partial(f, j);
      if (df.is_zero()) continue;
      // dx^j ^ dx^I: moving dx^j into place passes the indices of I below j.
      const bool odd = bits_below(m, j) % 2;
      Expr& slot = out.at_mask(m | (Mask{1} << j));
      slot = odd ? slot - df : slot + df;
    }
  }
  return out;
}

FormField interior(const VectorField& v, const FormField& w) {
  if (v.dim() != w.dim()) throw ShapeError("interior: dimension mismatch");
  if (w.degree() < 1) throw ShapeError("interior: degree 0 input");
  const int d = w.dim();
  FormField out(d, w.degree() - 1);
  const auto& tab = multi_indices(d, w.degree());
  for (std::size_t p = 0; p < tab.masks.size(); ++p) {
    if (w.at(p).is_zero()) continue;
    const auto& idx = tab.indices[p];
    for (std::size_t s = 0; s < idx.size(); ++s) {
      if (v[idx[s]].is_zero()) continue;
      Expr term = v[idx[s]] * w.at(p);
      Expr& slot = out.at_mask(tab.masks[p] & ~(Mask{1} << idx[s]));
      slot = s % 2 ? slot - term : slot + term;
    }
  }
  return out;
}

FormField lie_derivative(const VectorField& v, const FormField& w) {
  FormField out = w.degree() < w.dim() ? interior(v, exterior_derivative(w)) : FormField(w.dim(), w.degree());
  if (w.degree() > 0) out += exterior_derivative(interior(v, w));
  return out;
}

FormField wedge(const FormField& a, const FormField& b) {
  if (a.dim() != b.dim()) throw ShapeError("wedge: dimension mismatch");
  const int d = a.dim();
  FormField out(d, a.degree() + b.degree());
  const auto& ta = multi_indices(d, a.degree());
  const auto& tb = multi_indices(d, b.degree());
  for (std::size_t p = 0; p < ta.masks.size(); ++p) {
    if (a.at(p).is_zero()) continue;
    for (std::size_t q = 0; q < tb.masks.size(); ++q) {
      if ((ta.masks[p] & tb.masks[q]) || b.at(q).is_zero()) continue;
      int inv = 0;
      for (int j : tb.indices[q]) inv += popcount(ta.masks[p] & ~((Mask{2} << j) - 1));
      Expr term = a.at(p) * b.at(q);
      Expr& slot = out.at_mask(ta.masks[p] | tb.masks[q]);
      slot = inv % 2 ? slot - term : slot + term;
    }
  }
  return out;
}

namespace {

// ∂_l P^{jk} for all l, j<k... evaluated densely: D[l](j,k).
std::vector<Mat> bivector_gradient(const BivectorField& p, std::span<const double> x) {
  const int n = p.dim();
  std::vector<Mat> grad(static_cast<std::size_t>(n), Mat::Zero(n, n));
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k) {
      const Expr e = p(j, k);
      if (e.is_constant()) continue;
      for (int l = 0; l < n; ++l) {
        const double v = partial(e, l).eval(x);
        grad[static_cast<std::size_t>(l)](j, k) = v;
        grad[static_cast<std::size_t>(l)](k, j) = -v;
      }
    }
  return grad;
}

}  // namespace

AltTensor schouten(const BivectorField& p, const BivectorField& q, std::span<const double> x) {
  if (p.dim() != q.dim()) throw ShapeError("schouten: dimension mismatch");
  const int n = p.dim();
  AltTensor out(n, 3);
  if (n < 3) return out;
  const Mat P = p.eval(x);
  const Mat Q = q.eval(x);
  const std::vector<Mat> dP = bivector_gradient(p, x);
  const std::vector<Mat> dQ = bivector_gradient(q, x);
  // Σ_cyc Σ_l (P^{il} ∂_l Q^{jk} + Q^{il} ∂_l P^{jk}); for P = Q this is 2 Σ_cyc π^{il} ∂_l π^{jk}.
  auto term = [&](int i, int j, int k) {
    double s = 0.0;
    for (int l = 0; l < n; ++l) {
      const auto L = static_cast<std::size_t>(l);
      s += P(i, l) * dQ[L](j, k) + Q(i, l) * dP[L](j, k);
    }
    return s;
  };
  const auto& tab = multi_indices(n, 3);
  for (std::size_t t = 0; t < tab.masks.size(); ++t) {
    const int i = tab.indices[t][0];
    const int j = tab.indices[t][1];
    const int k = tab.indices[t][2];
    out.at(t) = term(i, j, k) + term(j, k, i) + term(k, i, j);
  }
  return out;
}

AltTensor schouten(const BivectorField& p, const VectorField& r, std::span<const double> x) {
  if (p.dim() != r.dim()) throw ShapeError("schouten: dimension mismatch");
  const int n = p.dim();
  const Mat P = p.eval(x);
  const Vec R = r.eval(x);
  const std::vector<Mat> dP = bivector_gradient(p, x);
  Mat dR = Mat::Zero(n, n);  // dR(i, l) = ∂_l R^i
  for (int i = 0; i < n; ++i)
    if (!r[i].is_constant())
      for (int l = 0; l < n; ++l) dR(i, l) = partial(r[i], l).eval(x);
  AltTensor out(n, 2);
  const auto& tab = multi_indices(n, 2);
  for (std::size_t t = 0; t < tab.masks.size(); ++t) {
    const int i = tab.indices[t][0];
    const int j = tab.indices[t][1];
    // (L_R π)^{ij} = R^l ∂_l π^{ij} - π^{lj} ∂_l R^i - π^{il} ∂_l R^j
    double lie = 0.0;
    for (int l = 0; l < n; ++l)
      lie += R[l] * dP[static_cast<std::size_t>(l)](i, j) - P(l, j) * dR(i, l) - P(i, l) * dR(j, l);
    out.at(t) = -lie;
  }
  return out;
}

AltTensor wedge(const VectorField& r, const BivectorField& p, std::span<const double> x) {
  if (p.dim() != r.dim()) throw ShapeError("wedge: dimension mismatch");
  const int n = p.dim();
  AltTensor out(n, 3);
  if (n < 3) return out;
  const Mat P = p.eval(x);
  const Vec R = r.eval(x);
  const auto& tab = multi_indices(n, 3);
  for (std::size_t t = 0; t < tab.masks.size(); ++t) {
    const int i = tab.indices[t][0];
    const int j = tab.indices[t][1];
    const int k = tab.indices[t][2];
    out.at(t) = R[i] * P(j, k) + R[j] * P(k, i) + R[k] * P(i, j);
  }
  return out;
}

}  // namespace mulform
