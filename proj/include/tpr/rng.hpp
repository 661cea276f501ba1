#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace tpr {

// Explicitly seeded pseudo-random source. Every stochastic step (init,
// dropout, shuffling, data generation) draws from one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_);
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), eng_);
  }

  // Derives an independent child stream; keeps sibling streams stable when
  // one consumer draws more numbers than another.
  Rng fork(std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(eng_()), static_cast<std::uint32_t>(salt),
                      static_cast<std::uint32_t>(salt >> 32)};
    std::mt19937_64 e(seq);
    return Rng(e());
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace tpr
