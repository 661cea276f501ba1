#include "tpr/tpr_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tpr/errors.hpp"
#include "tpr/ops.hpp"

namespace tpr::core {

TprParams TprParams::init(const TprShape& shape, std::size_t hidden, const TprOptions& opt,
                          Rng& rng) {
  TprParams p;
  p.S = uniform_tensor({shape.d_sym, shape.n_sym},
                       1.0 / std::sqrt(static_cast<double>(shape.d_sym)), rng);
  p.R = uniform_tensor({shape.d_role, shape.n_role},
                       1.0 / std::sqrt(static_cast<double>(shape.d_role)), rng);
  p.W_S = linear_init({shape.n_sym, hidden}, hidden, rng);
  p.W_R = linear_init({shape.n_role, hidden}, hidden, rng);
  p.scale = Tensor::scalar(opt.scale_init);
  if (opt.selector_bias) {
    p.b_S = Tensor::zeros({shape.n_sym});
    p.b_R = Tensor::zeros({shape.n_role});
  }
  p.temp_sym = opt.temp_sym;
  p.temp_role = opt.temp_role;
  p.lambda = opt.lambda;
  p.validate();
  return p;
}

TprShape TprParams::shape() const {
  return TprShape{S.rows(), R.rows(), S.cols(), R.cols()};
}

void TprParams::validate() const {
  const auto s = shape();
  if (s.n_sym <= s.n_role) {
    throw ParameterError("tpr: number of symbols (" + std::to_string(s.n_sym) +
                         ") must exceed number of roles (" + std::to_string(s.n_role) + ")");
  }
  if (!(temp_sym > 0.0) || !(temp_role > 0.0)) {
    throw ParameterError("tpr: temperature must be > 0");
  }
  if (!(scale[0] > 0.0)) throw ParameterError("tpr: scale must be > 0");
  if (!(lambda >= 0.0)) throw ParameterError("tpr: lambda must be >= 0");
  if (W_S.rows() != s.n_sym || W_R.rows() != s.n_role || W_S.cols() != W_R.cols()) {
    throw DimensionError("tpr: selector shapes " + shape_str(W_S.shape()) + " and " +
                         shape_str(W_R.shape()) + " do not match S/R");
  }
}

void TprParams::register_into(ParamStore& store) const {
  store.add("tpr.S", S);
  store.add("tpr.R", R);
  store.add("tpr.W_S", W_S);
  store.add("tpr.W_R", W_R);
  store.add("tpr.scale", scale);
  if (b_S.defined()) store.add("tpr.b_S", b_S);
  if (b_R.defined()) store.add("tpr.b_R", b_R);
}

Tensor attend(const Tensor& h, const Tensor& W, double temperature, const Tensor* bias) {
  if (!(temperature > 0.0)) {
    throw ParameterError("attend: temperature must be > 0, got " + std::to_string(temperature));
  }
  const bool single = h.dim() == 1;
  Tensor logits = matmul_nt(single ? reshape(h, {1, h.size()}) : h, W);
  if (bias && bias->defined()) logits = add_rowvec(logits, *bias);
  Tensor a = softmax(logits, temperature);
  return single ? reshape(a, {W.rows()}) : a;
}

Tensor bind(const Tensor& a_sym, const Tensor& a_role, const TprParams& p) {
  const auto s = p.shape();
  if (a_sym.size() != s.n_sym || a_role.size() != s.n_role) {
    throw DimensionError("bind: attention sizes " + shape_str(a_sym.shape()) + " and " +
                         shape_str(a_role.shape()) + " vs S " + shape_str(p.S.shape()) +
                         " and R " + shape_str(p.R.shape()));
  }
  Tensor x = bind_sequence(reshape(a_sym, {1, s.n_sym}), reshape(a_role, {1, s.n_role}), p);
  return reshape(x, {s.d_sym, s.d_role});
}

Tensor bind_sequence(const Tensor& a_sym, const Tensor& a_role, const TprParams& p) {
  const auto s = p.shape();
  if (a_sym.cols() != s.n_sym || a_role.cols() != s.n_role || a_sym.rows() != a_role.rows()) {
    throw DimensionError("bind: attention shapes " + shape_str(a_sym.shape()) + " and " +
                         shape_str(a_role.shape()) + " vs S " + shape_str(p.S.shape()) +
                         " and R " + shape_str(p.R.shape()));
  }
  // Row t: (S a_S)ᵀ and (R a_R)ᵀ, then their outer product.
  Tensor fillers = matmul_nt(a_sym, p.S);
  Tensor roles = matmul_nt(a_role, p.R);
  return mul_scalar(rowwise_outer(fillers, roles), p.scale);
}

double orthonormality_deviation(const Tensor& R) {
  const std::size_t d = R.rows(), n = R.cols();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < d; ++k) g += R[k * n + i] * R[k * n + j];
      worst = std::max(worst, std::abs(g - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

Tensor unbind_role(const Tensor& x, std::size_t j, const TprParams& p) {
  const auto s = p.shape();
  if (x.size() != s.d_sym * s.d_role) {
    throw DimensionError("unbind_role: bound tensor " + shape_str(x.shape()) + " vs [" +
                         std::to_string(s.d_sym) + "×" + std::to_string(s.d_role) + "]");
  }
  if (j >= s.n_role) {
    throw ParameterError("unbind_role: role " + std::to_string(j) + " out of range");
  }
  const double dev = orthonormality_deviation(p.R);
  if (dev > 1e-6) {
    throw PreconditionError("unbind_role: role columns not orthonormal (deviation " +
                                std::to_string(dev) + ")",
                            dev);
  }
  Tensor role = slice_cols(p.R, j, j + 1);  // [d_role × 1]
  Tensor filler = matmul(reshape(x, {s.d_sym, s.d_role}), role);
  return reshape(scale(filler, 1.0 / p.scale[0]), {s.d_sym});
}

Tensor role_vector(const Tensor& a_role, const Tensor& R) {
  if (a_role.size() != R.cols()) {
    throw DimensionError("role_vector: attention " + shape_str(a_role.shape()) +
                         " vs R " + shape_str(R.shape()));
  }
  return reshape(matmul(R, reshape(a_role, {R.cols(), 1})), {R.rows()});
}

Tensor orthogonality_penalty(const Tensor& R, double lambda) {
  const std::size_t d = R.rows(), n = R.cols();
  Tensor rrt = matmul_nt(R, R);                 // [d×d]
  Tensor rtr = matmul(transpose(R), R);         // [n×n]
  Tensor a = frobenius_sq(sub(rrt, Tensor::identity(d)));
  Tensor b = frobenius_sq(sub(rtr, Tensor::identity(n)));
  return scale(add(a, b), lambda);
}

Tensor orthonormalize_columns(const Tensor& R) {
  const std::size_t d = R.rows(), n = R.cols();
  if (n > d) {
    throw ParameterError("orthonormalize_columns: " + std::to_string(n) +
                         " columns cannot be orthonormal in dimension " + std::to_string(d));
  }
  std::vector<double> q(R.values().begin(), R.values().end());
  for (std::size_t j = 0; j < n; ++j) {
    // Two passes of modified Gram-Schmidt for numerical orthogonality.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += q[k * n + i] * q[k * n + j];
        for (std::size_t k = 0; k < d; ++k) q[k * n + j] -= dot * q[k * n + i];
      }
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += q[k * n + j] * q[k * n + j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw ParameterError("orthonormalize_columns: rank-deficient input");
    for (std::size_t k = 0; k < d; ++k) q[k * n + j] /= norm;
  }
  return Tensor::from({d, n}, std::move(q));
}

}  // namespace tpr::core
