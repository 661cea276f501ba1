#pragma once

// Differentiable primitives. Matrices are 2-D row-major tensors; a 1-D tensor
// is accepted wherever a single row is expected. Each op validates shapes and
// throws DimensionError naming both operands on mismatch.

#include <cstddef>
#include <vector>

#include "tpr/rng.hpp"
#include "tpr/tensor.hpp"

namespace tpr {

// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×k] · b[n×k]ᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a[m×n] + row vector b[n] broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a · s where s holds exactly one element (trainable scalar).
Tensor mul_scalar(const Tensor& a, const Tensor& s);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// u[m] ⊗ v[n] -> [m×n]
Tensor outer(const Tensor& u, const Tensor& v);
// Row t of the result is vec(s_t ⊗ r_t), i.e. [N×(ds·dr)] from s[N×ds], r[N×dr].
Tensor rowwise_outer(const Tensor& s, const Tensor& r);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
// Rows of table selected by ids (embedding lookup).
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor max(const Tensor& a);
// Column-wise reductions over the rows whose mask entry is nonzero (all rows
// when mask is empty); result is [1×n].
Tensor mean_rows(const Tensor& a, const std::vector<char>& mask = {});
Tensor max_rows(const Tensor& a, const std::vector<char>& mask = {});
Tensor frobenius_sq(const Tensor& a);

// Multiplies by a fixed mask (dropout mask application).
Tensor apply_mask(const Tensor& a, std::vector<double> mask);
// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

// Row-wise layer normalization with per-column gain and bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Softmax over the last axis of z / temperature, max-subtracted. key_mask, when
// given, has one entry per column; zero entries receive -inf before softmax.
Tensor softmax(const Tensor& z, double temperature = 1.0,
               const std::vector<char>& key_mask = {});
Tensor log_softmax(const Tensor& z);

// Mean over rows of -log softmax(logits)[row, label[row]], via log-sum-exp.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace tpr
