#pragma once

// Backbone encoder (a small trainable transformer) and the two TPR-layer
// encoder variants that produce the per-token selector inputs h_S and h_R.

#include <cstddef>
#include <string>
#include <vector>

#include "tpr/params.hpp"
#include "tpr/rng.hpp"
#include "tpr/tensor.hpp"
#include "tpr/tpr_core.hpp"

namespace tpr::enc {

// One post-norm transformer encoder layer:
// MHA -> residual+dropout -> LN -> FFN -> residual+dropout -> LN.
struct TransformerLayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor ln2_g, ln2_b;
  std::size_t heads = 1;

  static TransformerLayerParams init(std::size_t hidden, std::size_t ff, std::size_t heads,
                                     Rng& rng);
  void register_into(ParamStore& store, const std::string& prefix) const;
};

// Dropout is applied only when rng is non-null. key_mask (one entry per row of
// x, zero = padding) keeps padded positions out of every attention softmax.
Tensor transformer_layer(const Tensor& x, const TransformerLayerParams& p,
                         const std::vector<char>& key_mask, double dropout, Rng* rng);

struct BackboneConfig {
  std::size_t vocab = 0;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff = 128;
  std::size_t max_len = 32;
  double dropout = 0.1;

  void validate() const;
};

struct BackboneParams {
  Tensor tok_emb;  // [V × hidden]
  Tensor pos_emb;  // [max_len × hidden]
  std::vector<TransformerLayerParams> layers;

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
  void register_into(ParamStore& store) const;
};

// Contextual embeddings v(t), [N × hidden]. mask marks real tokens with 1 and
// padding with 0; an empty mask means no padding.
Tensor encode_backbone(const std::vector<int>& tokens, const std::vector<char>& mask,
                       const BackboneParams& p, const BackboneConfig& cfg, Rng* rng);

struct LstmParams {
  Tensor w_ih;  // [input × 4H], gate order i, f, g, o
  Tensor w_hh;  // [H × 4H]
  Tensor b;     // [4H]
  std::size_t hidden = 0;

  static LstmParams init(std::size_t input, std::size_t hidden, Rng& rng);
  void register_into(ParamStore& store, const std::string& prefix) const;
};

struct LstmState {
  Tensor h;  // [1 × H]
  Tensor c;  // [1 × H]
};

LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p);

// Final hidden state of a unidirectional LSTM run over the rows of v.
Tensor lstm_final_state(const Tensor& v, const LstmParams& p);

enum class TprEncoderKind { transformer, lstm };

struct TprEncoderParams {
  TprEncoderKind kind = TprEncoderKind::transformer;
  TransformerLayerParams sym_layer, role_layer;
  LstmParams sym_lstm, role_lstm;

  static TprEncoderParams init(TprEncoderKind kind, std::size_t hidden, std::size_t ff,
                               std::size_t heads, std::size_t bound_size, Rng& rng);
  void register_into(ParamStore& store) const;
};

struct SelectorInputs {
  Tensor h_sym;   // [N × hidden]
  Tensor h_role;  // [N × hidden]
};

SelectorInputs tpr_encode_transformer(const Tensor& v, const TprEncoderParams& p,
                                      const std::vector<char>& key_mask, double dropout,
                                      Rng* rng);

// Per-step record of the recurrent TPR layer. The hidden input of both LSTMs
// at step t is vec(x(t-1)) with x(-1) = 0; each keeps its own cell state.
struct LstmTprTrace {
  std::vector<Tensor> h_sym, h_role;  // [1 × d_S·d_R] each
  Tensor a_sym;                       // [N × n_sym]
  Tensor a_role;                      // [N × n_role]
  Tensor bound;                       // [N × d_S·d_R]
};

LstmTprTrace tpr_encode_lstm(const Tensor& v, const TprEncoderParams& p,
                             const core::TprParams& tpr);

}  // namespace tpr::enc
