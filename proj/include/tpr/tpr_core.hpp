#pragma once

// The TPR layer: global symbol (filler) and role embeddings, temperature
// softmax selectors, rank-1 binding, unbinding, and the double soft
// orthogonality penalty on the role matrix.
//
// Shapes follow the column convention: S is [d_sym × n_sym] and R is
// [d_role × n_role], one embedding per column. Sequence-level helpers work on
// token-major matrices (one token per row).

#include <cstddef>
#include <optional>

#include "tpr/params.hpp"
#include "tpr/tensor.hpp"

namespace tpr::core {

struct TprShape {
  std::size_t d_sym = 32;
  std::size_t d_role = 32;
  std::size_t n_sym = 50;
  std::size_t n_role = 35;

  std::size_t bound_size() const { return d_sym * d_role; }
};

struct TprOptions {
  double temp_sym = 1.0;
  double temp_role = 1.0;
  double scale_init = 1000.0;
  double lambda = 1e-3;
  bool selector_bias = false;
};

struct TprParams {
  Tensor S;      // [d_sym × n_sym]
  Tensor R;      // [d_role × n_role]
  Tensor W_S;    // [n_sym × hidden]
  Tensor W_R;    // [n_role × hidden]
  Tensor scale;  // [1], trainable
  Tensor b_S;    // [n_sym], only with selector_bias
  Tensor b_R;    // [n_role], only with selector_bias
  double temp_sym = 1.0;
  double temp_role = 1.0;
  double lambda = 1e-3;

  static TprParams init(const TprShape& shape, std::size_t hidden, const TprOptions& opt,
                        Rng& rng);
  // Checks n_sym > n_role, T > 0, scale > 0, lambda >= 0.
  void validate() const;
  TprShape shape() const;
  void register_into(ParamStore& store) const;
};

// softmax(W h / T) for every row of h ([N×hidden] or a single [hidden]).
Tensor attend(const Tensor& h, const Tensor& W, double temperature,
              const Tensor* bias = nullptr);

// scale · S (a_S a_Rᵀ) Rᵀ for one token, returned as [d_sym × d_role].
Tensor bind(const Tensor& a_sym, const Tensor& a_role, const TprParams& p);

// Row t holds vec(bind(a_sym[t], a_role[t])); result is [N × d_sym·d_role].
Tensor bind_sequence(const Tensor& a_sym, const Tensor& a_role, const TprParams& p);

// (x r_j) / scale. Requires orthonormal role columns (max |RᵀR − I| ≤ 1e-6).
Tensor unbind_role(const Tensor& x, std::size_t j, const TprParams& p);

// R a_R
Tensor role_vector(const Tensor& a_role, const Tensor& R);

// λ (‖R Rᵀ − I‖²_F + ‖Rᵀ R − I‖²_F)
Tensor orthogonality_penalty(const Tensor& R, double lambda);

// max |RᵀR − I| over all entries.
double orthonormality_deviation(const Tensor& R);

// Gram-Schmidt on the columns of R (requires n_role ≤ d_role).
Tensor orthonormalize_columns(const Tensor& R);

}  // namespace tpr::core
