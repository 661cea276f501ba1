#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the library's kernels.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tpr/rng.hpp"
#include "tpr/tensor.hpp"
#include "tpr/tpr_core.hpp"

namespace oracle {

inline std::vector<double> random_simplex(std::size_t n, tpr::Rng& rng) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = -std::log(rng.uniform(1e-12, 1.0)));
  for (auto& x : v) x /= s;
  return v;
}

// Singular values of a row-major m×n matrix, descending. One-sided Jacobi
// rotations on the columns; accurate to roughly eps·‖A‖ in absolute terms,
// which is what a rank test near zero needs (BᵀB eigenvalues would square the
// error).
inline std::vector<double> singular_values(std::vector<double> a, std::size_t m, std::size_t n) {
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a[i * n + p], y = a[i * n + q];
          alpha += x * x;
          beta += y * y;
          gamma += x * y;
        }
        if (gamma == 0.0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a[i * n + p], y = a[i * n + q];
          a[i * n + p] = c * x - s * y;
          a[i * n + q] = s * x + c * y;
        }
      }
    }
    if (off < 1e-15) break;
  }
  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a[i * n + j] * a[i * n + j];
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

inline double second_singular_value(const std::vector<double>& a, std::size_t m, std::size_t n) {
  auto sv = m >= n ? singular_values(a, m, n) : [&] {
    std::vector<double> t(a.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    return singular_values(t, n, m);
  }();
  return sv.size() > 1 ? sv[1] : 0.0;
}

// x_ij = scale · Σ_k Σ_l S_ik a_S[k] a_R[l] R_jl, written as plain loops.
inline std::vector<double> bind_loops(const std::vector<double>& a_sym,
                                      const std::vector<double>& a_role,
                                      const tpr::core::TprParams& p) {
  const auto sh = p.shape();
  std::vector<double> x(sh.d_sym * sh.d_role, 0.0);
  for (std::size_t i = 0; i < sh.d_sym; ++i)
    for (std::size_t j = 0; j < sh.d_role; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < sh.n_sym; ++k)
        for (std::size_t l = 0; l < sh.n_role; ++l)
          acc += p.S[i * sh.n_sym + k] * a_sym[k] * a_role[l] * p.R[j * sh.n_role + l];
      x[i * sh.d_role + j] = p.scale[0] * acc;
    }
  return x;
}

// Outer product a_S a_Rᵀ.
inline std::vector<double> binding_matrix(const std::vector<double>& a_sym,
                                          const std::vector<double>& a_role) {
  std::vector<double> b(a_sym.size() * a_role.size());
  for (std::size_t k = 0; k < a_sym.size(); ++k)
    for (std::size_t l = 0; l < a_role.size(); ++l) b[k * a_role.size() + l] = a_sym[k] * a_role[l];
  return b;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// ‖R Rᵀ − I‖_F computed directly.
inline double gram_row_deviation(const tpr::Tensor& R) {
  const std::size_t d = R.rows(), n = R.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < n; ++k) g += R[i * n + k] * R[j * n + k];
      g -= i == j ? 1.0 : 0.0;
      s += g * g;
    }
  return std::sqrt(s);
}

// λ(‖RRᵀ − I‖² + ‖RᵀR − I‖²) by loops.
inline double penalty_loops(const tpr::Tensor& R, double lambda) {
  const std::size_t d = R.rows(), n = R.cols();
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < n; ++k) g += R[i * n + k] * R[j * n + k];
      g -= i == j ? 1.0 : 0.0;
      a += g * g;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < d; ++k) g += R[k * n + i] * R[k * n + j];
      g -= i == j ? 1.0 : 0.0;
      b += g * g;
    }
  return lambda * (a + b);
}

}  // namespace oracle
