#include <atomic>
#include <cstdlib>
#include <string_view>

#include "tpr/simd.hpp"

namespace tpr::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  const bool avx2 = avx2_kernels() != nullptr && cpu_has_avx2();
  if (const char* env = std::getenv("TPR_SIMD")) {
    const std::string_view v{env};
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && avx2) return Backend::avx2;
  }
  return avx2 ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  return avx2_kernels() != nullptr && cpu_has_avx2();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) b = Backend::scalar;
  current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

const KernelTable& active() {
  if (active_backend() == Backend::avx2) return *avx2_kernels();
  return scalar_kernels();
}

}  // namespace tpr::simd
