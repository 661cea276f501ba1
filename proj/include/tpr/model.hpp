#pragma once

// The four model families: backbone-only, backbone + LSTM, and the two TPR
// variants (recurrent and transformer TPR layers), all ending in an
// aggregation step and a task-specific linear classifier.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tpr/encoders.hpp"
#include "tpr/head.hpp"
#include "tpr/kv.hpp"
#include "tpr/params.hpp"
#include "tpr/tpr_core.hpp"

namespace tpr {

enum class Family { baseline, baseline_lstm, tpr_lstm, tpr_transformer };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
bool has_tpr_layer(Family f);

struct ModelConfig {
  Family family = Family::tpr_transformer;
  enc::BackboneConfig backbone;
  core::TprShape tpr;
  core::TprOptions tpr_opt;
  head::Aggregation aggregation = head::Aggregation::concat_project;
  std::size_t proj_dim = 128;
  std::size_t num_classes = 2;
  std::size_t lstm_hidden = 0;  // baseline+lstm; 0 means backbone hidden size
  bool post_layer = false;      // extra encoder over the bound tensors
  std::size_t post_heads = 1;

  void validate() const;
  KvMap to_kv() const;
  static ModelConfig from_kv(const KvMap& kv);
};

class Model {
 public:
  struct Output {
    Tensor logits;       // [1 × C]
    Tensor sym_attn;     // [N × n_sym], TPR families only
    Tensor role_attn;    // [N × n_role], TPR families only
    Tensor token_repr;   // [N × D] bound tensors (TPR) or backbone output
  };

  Model(const ModelConfig& cfg, std::uint64_t seed);

  // Dropout is active only when dropout_rng is given. mask: 1 = real token.
  Output forward(const std::vector<int>& ids, const std::vector<char>& mask = {},
                 Rng* dropout_rng = nullptr) const;

  // λ-weighted orthogonality penalty on R, or a constant zero for families
  // without a TPR layer.
  Tensor penalty() const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const core::TprParams* tpr() const { return tpr_ ? &*tpr_ : nullptr; }
  core::TprParams* tpr() { return tpr_ ? &*tpr_ : nullptr; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  enc::BackboneParams backbone_;
  std::optional<enc::TprEncoderParams> tprenc_;
  std::optional<enc::LstmParams> top_lstm_;
  std::optional<enc::TransformerLayerParams> post_;
  std::optional<core::TprParams> tpr_;
  Tensor proj_;
  Tensor W_f_;
};

}  // namespace tpr
