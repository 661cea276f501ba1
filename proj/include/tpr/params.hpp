#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tpr/errors.hpp"
#include "tpr/rng.hpp"
#include "tpr/tensor.hpp"

namespace tpr {

// Named trainable tensors, iterated in name order. Module structs hold the
// same handles, so updates made through the store are visible everywhere.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    if (!entries_.emplace(name, std::move(t)).second) {
      throw ContractError("param store: duplicate parameter " + name);
    }
  }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("param store: no parameter " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.size();
    return n;
  }
  void zero_grad() {
    for (auto& [k, v] : entries_) v.zero_grad();
  }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Tensor> entries_;
};

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

// Linear-layer weight init, uniform in ±1/sqrt(fan_in).
inline Tensor linear_init(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace tpr
