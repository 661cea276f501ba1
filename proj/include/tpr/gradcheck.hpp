#pragma once

// Central finite-difference checks of the full training loss against the
// analytic gradients, per parameter tensor.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tpr/model.hpp"
#include "tpr/train.hpp"

namespace tpr::gradcheck {

struct Entry {
  std::string name;
  std::size_t size = 0;
  double rel_error = 0.0;  // ‖a − n‖ / max(‖a‖, ‖n‖, 1e-8)
  bool pass = false;
};

struct Report {
  std::vector<Entry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

// Per tensor, ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-6) with
// central differences of step h. loss must rebuild its graph on every call.
Report check(ParamStore& params, const std::function<Tensor()>& loss, double tol,
             double h = 1e-5);

// Mean cross-entropy of the batch plus the orthogonality penalty, dropout off.
Tensor model_loss(const Model& model, const std::vector<train::Example>& batch);

// Tiny configuration for a family: small vocab, one backbone layer, small TPR
// shapes and unit scale so logits stay well inside the softmax's linear range.
ModelConfig tiny_config(Family f);
std::vector<train::Example> tiny_batch(const ModelConfig& cfg, std::uint64_t seed,
                                       std::size_t count = 2);

// Uses h = 1e-4.
Report check_family(Family f, std::uint64_t seed, double tol = 1e-4);

}  // namespace tpr::gradcheck
