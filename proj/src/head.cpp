#include "tpr/head.hpp"

#include <string>

#include "tpr/errors.hpp"
#include "tpr/ops.hpp"
#include "tpr/tpr_core.hpp"

namespace tpr::head {

std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::max_pool: return "max_pool";
    case Aggregation::mean_pool: return "mean_pool";
    case Aggregation::cls_only: return "cls_only";
    case Aggregation::concat_project: return "concat_project";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view name) {
  for (auto a : {Aggregation::max_pool, Aggregation::mean_pool, Aggregation::cls_only,
                 Aggregation::concat_project}) {
    if (aggregation_name(a) == name) return a;
  }
  throw ConfigError("unknown aggregation strategy '" + std::string(name) + "'");
}

Tensor aggregate(const Tensor& x_seq, const std::vector<char>& mask, Aggregation strategy,
                 const Tensor* proj) {
  const std::size_t n = x_seq.rows(), d = x_seq.cols();
  if (!mask.empty() && mask.size() != n) {
    throw DimensionError("aggregate: mask length " + std::to_string(mask.size()) + " vs " +
                         shape_str(x_seq.shape()));
  }
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) any = any || mask.empty() || mask[i];
  if (n == 0 || !any) throw DataError("aggregate: sequence is empty after masking");

  switch (strategy) {
    case Aggregation::max_pool: return max_rows(x_seq, mask);
    case Aggregation::mean_pool: return mean_rows(x_seq, mask);
    case Aggregation::cls_only: return slice_rows(x_seq, 0, 1);
    case Aggregation::concat_project: {
      if (!proj || !proj->defined()) throw ContractError("aggregate: concat_project needs proj");
      if (proj->cols() % d != 0 || proj->cols() / d < n) {
        throw DimensionError("aggregate: projection " + shape_str(proj->shape()) +
                             " cannot take " + shape_str(x_seq.shape()));
      }
      Tensor x = x_seq;
      bool padded = false;
      for (auto m : mask) padded = padded || !m;
      if (padded) {
        std::vector<double> keep(n * d);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) keep[i * d + j] = mask[i] ? 1.0 : 0.0;
        x = apply_mask(x, std::move(keep));
      }
      return matmul_nt(reshape(x, {1, n * d}), slice_cols(*proj, 0, n * d));
    }
  }
  throw ContractError("aggregate: unknown strategy");
}

Tensor logits(const Tensor& f, const Tensor& W_f) {
  return matmul_nt(f.dim() == 1 ? reshape(f, {1, f.size()}) : f, W_f);
}

Tensor classify(const Tensor& f, const Tensor& W_f) { return softmax(logits(f, W_f)); }

Tensor loss(const Tensor& batch_logits, const std::vector<int>& labels, const Tensor* R,
            double lambda) {
  Tensor ce = cross_entropy(batch_logits, labels);
  if (!R || !R->defined()) return ce;
  return add(ce, core::orthogonality_penalty(*R, lambda));
}

}  // namespace tpr::head
