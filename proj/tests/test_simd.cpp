#include <cmath>
#include <vector>

#include "doctest.h"
#include "tpr/ops.hpp"
#include "tpr/rng.hpp"
#include "tpr/simd.hpp"

using namespace tpr;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(simd::backend_available(simd::Backend::scalar));
  simd::ScopedBackend s(simd::Backend::scalar);
  CHECK(simd::active_backend() == simd::Backend::scalar);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const simd::KernelTable* avx = simd::avx2_kernels();
  if (!avx || !simd::backend_available(simd::Backend::avx2)) {
    MESSAGE("avx2 unavailable on this host; equivalence not exercised");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  Rng rng(42);
  // Odd sizes cover the vector tails.
  for (std::size_t m : {1u, 3u, 4u, 7u, 13u}) {
    for (std::size_t n : {1u, 2u, 5u, 8u, 17u}) {
      for (std::size_t k : {1u, 4u, 9u, 33u}) {
        const auto a = random_vec(m * k, rng), at = random_vec(k * m, rng);
        const auto b = random_vec(k * n, rng), bt = random_vec(n * k, rng);
        const auto c0 = random_vec(m * n, rng);
        auto c1 = c0, c2 = c0;
        ref.gemm_nn(m, n, k, a.data(), b.data(), c1.data());
        avx->gemm_nn(m, n, k, a.data(), b.data(), c2.data());
        CHECK(max_abs_diff(c1, c2) < 1e-12);
        c1 = c0, c2 = c0;
        ref.gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
        avx->gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
        CHECK(max_abs_diff(c1, c2) < 1e-12);
        c1 = c0, c2 = c0;
        ref.gemm_tn(m, n, k, at.data(), b.data(), c1.data());
        avx->gemm_tn(m, n, k, at.data(), b.data(), c2.data());
        CHECK(max_abs_diff(c1, c2) < 1e-12);
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 31u, 100u}) {
    const auto x = random_vec(n, rng), y = random_vec(n, rng);
    CHECK(std::abs(ref.dot(n, x.data(), y.data()) - avx->dot(n, x.data(), y.data())) < 1e-12);
    CHECK(std::abs(ref.sum(n, x.data()) - avx->sum(n, x.data())) < 1e-12);
    if (n > 0) CHECK(ref.max(n, x.data()) == avx->max(n, x.data()));
    auto y1 = y, y2 = y;
    ref.axpy(n, 0.7, x.data(), y1.data());
    avx->axpy(n, 0.7, x.data(), y2.data());
    CHECK(max_abs_diff(y1, y2) < 1e-12);
    std::vector<double> o1(n), o2(n);
    ref.mul(n, x.data(), y.data(), o1.data());
    avx->mul(n, x.data(), y.data(), o2.data());
    CHECK(max_abs_diff(o1, o2) == 0.0);
    ref.add(n, x.data(), y.data(), o1.data());
    avx->add(n, x.data(), y.data(), o2.data());
    CHECK(max_abs_diff(o1, o2) == 0.0);
  }
}

TEST_CASE("ops give the same result under either backend") {
  if (!simd::backend_available(simd::Backend::avx2)) return;
  Rng rng(7);
  const auto a = Tensor::from({6, 11}, random_vec(66, rng));
  const auto b = Tensor::from({11, 5}, random_vec(55, rng));
  auto run = [&] {
    auto z = softmax(matmul(a, b), 0.7);
    return std::vector<double>(z.values().begin(), z.values().end());
  };
  std::vector<double> s, v;
  {
    simd::ScopedBackend g(simd::Backend::scalar);
    s = run();
  }
  {
    simd::ScopedBackend g(simd::Backend::avx2);
    v = run();
  }
  CHECK(max_abs_diff(s, v) < 1e-12);
}
