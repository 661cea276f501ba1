#include "tpr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tpr/errors.hpp"
#include "tpr/ops.hpp"

namespace tpr::train {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning rate must be finite and >= 0");
  }
  if (!(warmup_proportion >= 0.0 && warmup_proportion <= 1.0)) {
    throw ConfigError("train: warmup proportion must be in [0,1]");
  }
  if (accumulation_steps < 1) throw ConfigError("train: accumulation steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("train: invalid Adamax constants");
  }
}

KvMap TrainConfig::to_kv() const {
  KvMap kv;
  kv["train.lr"] = format_double(learning_rate);
  kv["train.beta1"] = format_double(beta1);
  kv["train.beta2"] = format_double(beta2);
  kv["train.eps"] = format_double(eps);
  kv["train.warmup"] = format_double(warmup_proportion);
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.batch"] = std::to_string(batch_size);
  kv["train.accum"] = std::to_string(accumulation_steps);
  kv["train.seed"] = std::to_string(seed);
  kv["train.dropout"] = dropout ? "1" : "0";
  return kv;
}

std::vector<Example> encode(const data::Corpus& corpus, const data::Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) out.push_back({data::pack(p, vocab), p.label});
  return out;
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (step > total_steps) throw ContractError("lr_at: step beyond total steps");
  const double warm = cfg.warmup_proportion * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warm) return cfg.learning_rate * s / warm;
  const double rest = static_cast<double>(total_steps) - warm;
  if (rest <= 0.0) return cfg.learning_rate;
  return cfg.learning_rate * std::max(0.0, (static_cast<double>(total_steps) - s) / rest);
}

std::size_t updates_per_epoch(std::size_t n, const TrainConfig& cfg) {
  const std::size_t micro = (n + cfg.batch_size - 1) / cfg.batch_size;
  return (micro + cfg.accumulation_steps - 1) / cfg.accumulation_steps;
}

void Adamax::step(ParamStore& params, double lr) {
  ++t_;
  const double bias = 1.0 - std::pow(b1_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto& m = m_[name];
    auto& u = u_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      u.assign(p.size(), 0.0);
    }
    auto theta = p.mutable_values();
    const bool has = p.has_grad();
    const auto g = p.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      u[i] = std::max(b2_ * u[i], std::abs(gi));
      theta[i] -= lr / bias * m[i] / (u[i] + eps_);
    }
  }
}

std::vector<int> predict(const Model& model, const std::vector<Example>& examples) {
  NoGradGuard guard;
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const Tensor out_logits = model.forward(ex.ids).logits;
    const auto logits = out_logits.values();
    out.push_back(static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
  }
  return out;
}

double accuracy(const Model& model, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  const auto pred = predict(model, examples);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == examples[i].label;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(examples.size());
}

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot take(const ParamStore& params) {
  Snapshot s;
  for (const auto& [name, p] : params) s.emplace_back(p.values().begin(), p.values().end());
  return s;
}

void restore(ParamStore& params, const Snapshot& s) {
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    std::copy(s[i].begin(), s[i].end(), p.mutable_values().begin());
    ++i;
  }
}

}  // namespace

TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const TrainConfig& cfg,
                  const std::function<void(std::size_t)>& on_update) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training corpus");
  const std::size_t C = model.config().num_classes;
  for (const auto& ex : train_set) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= C) {
      throw DataError("train: label " + std::to_string(ex.label) + " outside the model's " +
                      std::to_string(C) + " classes");
    }
  }

  ParamStore& params = model.params();
  params.zero_grad();
  Adamax opt(cfg);
  Rng order_rng = Rng(cfg.seed).fork(0x6f72646572);
  Rng dropout_rng = Rng(cfg.seed).fork(0x64726f70);
  const std::size_t n = train_set.size();
  const std::size_t per_epoch = updates_per_epoch(n, cfg);
  const std::size_t total = per_epoch * cfg.epochs;
  const std::size_t group = cfg.batch_size * cfg.accumulation_steps;

  TrainResult result;
  Snapshot best = take(params);
  bool have_best = false;
  std::vector<std::size_t> order(n);
  std::size_t update = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    // Micro-batches of batch_size are summed and the update divides by the
    // number of examples in the group, so accumulation over k micro-batches
    // is the same step as one batch k times larger.
    for (std::size_t start = 0; start < n; start += group) {
      const std::size_t end = std::min(n, start + group);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train_set[order[i]];
        auto out = model.forward(ex.ids, {}, cfg.dropout ? &dropout_rng : nullptr);
        Tensor ce = cross_entropy(out.logits, {ex.label});
        const double l = ce.item();
        if (!std::isfinite(l)) {
          throw TrainingError("train: non-finite loss " + std::to_string(l) + " at update " +
                                  std::to_string(update),
                              static_cast<long>(update), l);
        }
        loss_sum += l;
        backward(ce);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (auto& g : p.mutable_grad()) g *= inv;
      }
      Tensor pen = model.penalty();
      if (pen.requires_grad()) backward(pen);
      opt.step(params, lr_at(update, total, cfg));
      params.zero_grad();
      ++update;
      if (on_update) on_update(update);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.dev_acc = dev_set.empty() ? 0.0 : accuracy(model, dev_set);
    result.history.push_back(rec);
    if (dev_set.empty() || !have_best || rec.dev_acc > result.best_dev_acc) {
      result.best_dev_acc = rec.dev_acc;
      result.best_epoch = epoch;
      best = take(params);
      have_best = true;
    }
  }
  restore(params, best);
  result.updates = update;
  return result;
}

}  // namespace tpr::train
