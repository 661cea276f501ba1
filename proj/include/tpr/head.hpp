#pragma once

// Sentence aggregation over per-token tensors, the task classifier, and the
// training objective (cross-entropy plus role orthogonality penalty).

#include <string_view>
#include <vector>

#include "tpr/tensor.hpp"

namespace tpr::head {

enum class Aggregation { max_pool, mean_pool, cls_only, concat_project };

std::string_view aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

// x_seq is [N × D] (one flattened token tensor per row). For concat_project,
// proj is [p × N_max·D] and rows beyond N (and masked rows) count as zeros.
// Returns [1 × p] (p = D for the pooling strategies).
Tensor aggregate(const Tensor& x_seq, const std::vector<char>& mask, Aggregation strategy,
                 const Tensor* proj = nullptr);

// W_f f, [1 × C].
Tensor logits(const Tensor& f, const Tensor& W_f);
// softmax(W_f f), [1 × C].
Tensor classify(const Tensor& f, const Tensor& W_f);

// Mean cross-entropy of logits [B × C] against labels, plus the orthogonality
// penalty on R when R is given.
Tensor loss(const Tensor& batch_logits, const std::vector<int>& labels, const Tensor* R,
            double lambda);

}  // namespace tpr::head
