#pragma once

// Adamax with linear warm-up/decay, gradient accumulation over micro-batches,
// and best-dev model selection.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tpr/data.hpp"
#include "tpr/kv.hpp"
#include "tpr/model.hpp"

namespace tpr::train {

struct TrainConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_proportion = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t accumulation_steps = 2;
  std::uint64_t seed = 1;
  bool dropout = true;  // model dropout during training

  void validate() const;
  KvMap to_kv() const;
};

// A packed example ready for the model.
struct Example {
  std::vector<int> ids;
  int label = 0;
};

std::vector<Example> encode(const data::Corpus& corpus, const data::Vocab& vocab);

// Linear ramp to learning_rate over warmup_proportion·total_steps, then linear
// decay to 0 at total_steps. Update k (0-based) uses lr_at(k).
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

std::size_t updates_per_epoch(std::size_t n, const TrainConfig& cfg);

class Adamax {
 public:
  Adamax(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}
  explicit Adamax(const TrainConfig& cfg) : Adamax(cfg.beta1, cfg.beta2, cfg.eps) {}

  // m ← β1 m + (1−β1) g;  u ← max(β2 u, |g|);  θ ← θ − lr/(1−β1^t) · m/(u+ε).
  // Parameters without a gradient buffer are treated as having g = 0.
  void step(ParamStore& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, u_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean cross-entropy over the epoch
  double dev_acc = 0.0;     // percent
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_dev_acc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t updates = 0;
};

// Percent of examples whose argmax logit equals the label.
double accuracy(const Model& model, const std::vector<Example>& examples);
std::vector<int> predict(const Model& model, const std::vector<Example>& examples);

// Trains in place. On return the model holds the parameters of the epoch with
// the best dev accuracy (the last epoch when dev is empty). A non-finite loss
// raises TrainingError. on_update, when set, runs after every optimizer step.
TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const TrainConfig& cfg,
                  const std::function<void(std::size_t)>& on_update = {});

}  // namespace tpr::train
