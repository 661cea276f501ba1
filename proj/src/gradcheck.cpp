#include "tpr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tpr/ops.hpp"

namespace tpr::gradcheck {

Report check(ParamStore& params, const std::function<Tensor()>& loss, double tol, double h) {
  params.zero_grad();
  backward(loss());
  Report report;
  for (auto& [name, p] : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<double> numeric(p.size());
    {
      NoGradGuard guard;
      auto v = p.mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = loss().item();
        v[i] = keep - h;
        const double down = loss().item();
        v[i] = keep;
        numeric[i] = (up - down) / (2.0 * h);
      }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    Entry e;
    e.name = name;
    e.size = p.size();
    // The floor keeps exactly-zero gradients (attention key biases, say) from
    // comparing rounding noise against rounding noise.
    e.rel_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    e.pass = e.rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  params.zero_grad();
  return report;
}

Tensor model_loss(const Model& model, const std::vector<train::Example>& batch) {
  std::vector<Tensor> rows;
  std::vector<int> labels;
  for (const auto& ex : batch) {
    rows.push_back(model.forward(ex.ids).logits);
    labels.push_back(ex.label);
  }
  return add(cross_entropy(concat_rows(rows), labels), model.penalty());
}

ModelConfig tiny_config(Family f) {
  ModelConfig c;
  c.family = f;
  c.backbone.vocab = 11;
  c.backbone.hidden = 8;
  c.backbone.layers = 1;
  c.backbone.heads = 2;
  c.backbone.ff = 12;
  c.backbone.max_len = 6;
  c.backbone.dropout = 0.0;
  c.tpr.d_sym = 3;
  c.tpr.d_role = 2;
  c.tpr.n_sym = 5;
  c.tpr.n_role = 3;
  c.tpr_opt.scale_init = 1.0;
  c.tpr_opt.lambda = 0.05;
  c.tpr_opt.temp_sym = 0.7;
  c.tpr_opt.temp_role = 1.3;
  c.proj_dim = 4;
  c.num_classes = 3;
  c.lstm_hidden = 5;
  return c;
}

std::vector<train::Example> tiny_batch(const ModelConfig& cfg, std::uint64_t seed,
                                       std::size_t count) {
  Rng rng(seed);
  std::vector<train::Example> out;
  for (std::size_t k = 0; k < count; ++k) {
    train::Example ex;
    const std::size_t len = 2 + rng.index(cfg.backbone.max_len - 1);
    for (std::size_t i = 0; i < len; ++i) ex.ids.push_back(static_cast<int>(rng.index(cfg.backbone.vocab)));
    ex.label = static_cast<int>(rng.index(cfg.num_classes));
    out.push_back(std::move(ex));
  }
  return out;
}

Report check_family(Family f, std::uint64_t seed, double tol) {
  const auto cfg = tiny_config(f);
  Model model(cfg, seed);
  const auto batch = tiny_batch(cfg, seed ^ 0x9e3779b97f4a7c15ULL);
  // Whole-model losses have small gradients in places; at h = 1e-5 rounding
  // dominates the central difference, at 1e-3 truncation does.
  return check(model.params(), [&] { return model_loss(model, batch); }, tol, 1e-4);
}

}  // namespace tpr::gradcheck
