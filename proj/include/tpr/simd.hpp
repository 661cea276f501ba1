#pragma once

// Dense double-precision kernels used by the autodiff ops.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active table is picked once at startup from CPUID;
// TPR_SIMD=scalar|avx2 in the environment overrides the choice, and tests can
// switch tables with set_backend(). All matrices are row-major and all gemm
// variants accumulate into C.

#include <cstddef>
#include <span>
#include <string_view>

namespace tpr::simd {

enum class Backend { scalar, avx2 };

struct KernelTable {
  // C[m×n] += A[m×k] · B[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m×n] += A[m×k] · B[n×k]ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m×n] += A[k×m]ᵀ · B[k×n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  double (*dot)(std::size_t n, const double* a, const double* b);
  // y += alpha · x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = a ⊙ b
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  // out = a + b
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  double (*sum)(std::size_t n, const double* a);
  double (*max)(std::size_t n, const double* a);
};

const KernelTable& scalar_kernels();
// Nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_kernels();

bool backend_available(Backend b);
Backend active_backend();
void set_backend(Backend b);
std::string_view backend_name(Backend b);

const KernelTable& active();

// Span-level helpers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.size(), a.data(), b.data());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(x.size(), alpha, x.data(), y.data());
}
inline double sum(std::span<const double> a) {
  return active().sum(a.size(), a.data());
}

// RAII backend override for tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : saved_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

}  // namespace tpr::simd
