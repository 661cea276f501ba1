#include "tpr/encoders.hpp"

#include <cmath>

#include "tpr/errors.hpp"
#include "tpr/ops.hpp"

namespace tpr::enc {

TransformerLayerParams TransformerLayerParams::init(std::size_t hidden, std::size_t ff,
                                                    std::size_t heads, Rng& rng) {
  if (heads == 0 || hidden % heads != 0) {
    throw ParameterError("transformer layer: hidden size " + std::to_string(hidden) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  TransformerLayerParams p;
  p.heads = heads;
  p.wq = linear_init({hidden, hidden}, hidden, rng);
  p.wk = linear_init({hidden, hidden}, hidden, rng);
  p.wv = linear_init({hidden, hidden}, hidden, rng);
  p.wo = linear_init({hidden, hidden}, hidden, rng);
  p.bq = Tensor::zeros({hidden});
  p.bk = Tensor::zeros({hidden});
  p.bv = Tensor::zeros({hidden});
  p.bo = Tensor::zeros({hidden});
  p.ln1_g = Tensor::full({hidden}, 1.0);
  p.ln1_b = Tensor::zeros({hidden});
  p.ff1_w = linear_init({hidden, ff}, hidden, rng);
  p.ff1_b = Tensor::zeros({ff});
  p.ff2_w = linear_init({ff, hidden}, ff, rng);
  p.ff2_b = Tensor::zeros({hidden});
  p.ln2_g = Tensor::full({hidden}, 1.0);
  p.ln2_b = Tensor::zeros({hidden});
  return p;
}

void TransformerLayerParams::register_into(ParamStore& store, const std::string& prefix) const {
  const std::pair<const char*, const Tensor*> items[] = {
      {"wq", &wq},       {"bq", &bq},       {"wk", &wk},       {"bk", &bk},
      {"wv", &wv},       {"bv", &bv},       {"wo", &wo},       {"bo", &bo},
      {"ln1_g", &ln1_g}, {"ln1_b", &ln1_b}, {"ff1_w", &ff1_w}, {"ff1_b", &ff1_b},
      {"ff2_w", &ff2_w}, {"ff2_b", &ff2_b}, {"ln2_g", &ln2_g}, {"ln2_b", &ln2_b}};
  for (const auto& [name, t] : items) store.add(prefix + "." + name, *t);
}

Tensor transformer_layer(const Tensor& x, const TransformerLayerParams& p,
                         const std::vector<char>& key_mask, double dropout_p, Rng* rng) {
  const std::size_t hidden = x.cols();
  const std::size_t dh = hidden / p.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = add_rowvec(matmul(x, p.wq), p.bq);
  Tensor k = add_rowvec(matmul(x, p.wk), p.bk);
  Tensor v = add_rowvec(matmul(x, p.wv), p.bv);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t lo = h * dh, hi = lo + dh;
    Tensor scores = scale(matmul_nt(slice_cols(q, lo, hi), slice_cols(k, lo, hi)), inv_sqrt);
    Tensor weights = softmax(scores, 1.0, key_mask);
    heads.push_back(matmul(weights, slice_cols(v, lo, hi)));
  }
  Tensor attn = p.heads == 1 ? heads[0] : concat_cols(heads);
  attn = add_rowvec(matmul(attn, p.wo), p.bo);
  if (rng) attn = dropout(attn, dropout_p, *rng);
  Tensor h1 = layer_norm(add(x, attn), p.ln1_g, p.ln1_b);

  Tensor ff = gelu(add_rowvec(matmul(h1, p.ff1_w), p.ff1_b));
  ff = add_rowvec(matmul(ff, p.ff2_w), p.ff2_b);
  if (rng) ff = dropout(ff, dropout_p, *rng);
  return layer_norm(add(h1, ff), p.ln2_g, p.ln2_b);
}

void BackboneConfig::validate() const {
  if (vocab < 4) throw ConfigError("backbone: vocabulary must include the 4 reserved tokens");
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("backbone: hidden size " + std::to_string(hidden) +
                      " must be divisible by heads " + std::to_string(heads));
  }
  if (max_len == 0) throw ConfigError("backbone: max_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("backbone: dropout must be in [0,1)");
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneParams p;
  p.tok_emb = uniform_tensor({cfg.vocab, cfg.hidden}, 0.1, rng);
  p.pos_emb = uniform_tensor({cfg.max_len, cfg.hidden}, 0.1, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.layers.push_back(TransformerLayerParams::init(cfg.hidden, cfg.ff, cfg.heads, rng));
  }
  return p;
}

void BackboneParams::register_into(ParamStore& store) const {
  store.add("backbone.tok_emb", tok_emb);
  store.add("backbone.pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].register_into(store, "backbone.layer" + std::to_string(l));
  }
}

Tensor encode_backbone(const std::vector<int>& tokens, const std::vector<char>& mask,
                       const BackboneParams& p, const BackboneConfig& cfg, Rng* rng) {
  if (tokens.size() > cfg.max_len) {
    throw LengthError("encode_backbone: sequence of " + std::to_string(tokens.size()) +
                      " tokens exceeds max length " + std::to_string(cfg.max_len));
  }
  if (tokens.empty()) throw DataError("encode_backbone: empty sequence");
  if (!mask.empty() && mask.size() != tokens.size()) {
    throw DimensionError("encode_backbone: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(tokens.size()) + " tokens");
  }
  Tensor h = add(gather_rows(p.tok_emb, tokens), slice_rows(p.pos_emb, 0, tokens.size()));
  for (const auto& layer : p.layers) h = transformer_layer(h, layer, mask, cfg.dropout, rng);
  return h;
}

LstmParams LstmParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.w_ih = linear_init({input, 4 * hidden}, input, rng);
  p.w_hh = linear_init({hidden, 4 * hidden}, hidden, rng);
  p.b = Tensor::zeros({4 * hidden});
  return p;
}

void LstmParams::register_into(ParamStore& store, const std::string& prefix) const {
  store.add(prefix + ".w_ih", w_ih);
  store.add(prefix + ".w_hh", w_hh);
  store.add(prefix + ".b", b);
}

LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p) {
  const std::size_t H = p.hidden;
  Tensor gates = add_rowvec(add(matmul(x, p.w_ih), matmul(h_prev, p.w_hh)), p.b);
  Tensor i = sigmoid(slice_cols(gates, 0, H));
  Tensor f = sigmoid(slice_cols(gates, H, 2 * H));
  Tensor g = tanh(slice_cols(gates, 2 * H, 3 * H));
  Tensor o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Tensor lstm_final_state(const Tensor& v, const LstmParams& p) {
  Tensor h = Tensor::zeros({1, p.hidden});
  Tensor c = Tensor::zeros({1, p.hidden});
  for (std::size_t t = 0; t < v.rows(); ++t) {
    auto s = lstm_cell(slice_rows(v, t, t + 1), h, c, p);
    h = s.h;
    c = s.c;
  }
  return h;
}

TprEncoderParams TprEncoderParams::init(TprEncoderKind kind, std::size_t hidden,
                                        std::size_t ff, std::size_t heads,
                                        std::size_t bound_size, Rng& rng) {
  TprEncoderParams p;
  p.kind = kind;
  if (kind == TprEncoderKind::transformer) {
    p.sym_layer = TransformerLayerParams::init(hidden, ff, heads, rng);
    p.role_layer = TransformerLayerParams::init(hidden, ff, heads, rng);
  } else {
    p.sym_lstm = LstmParams::init(hidden, bound_size, rng);
    p.role_lstm = LstmParams::init(hidden, bound_size, rng);
  }
  return p;
}

void TprEncoderParams::register_into(ParamStore& store) const {
  if (kind == TprEncoderKind::transformer) {
    sym_layer.register_into(store, "tprenc.sym");
    role_layer.register_into(store, "tprenc.role");
  } else {
    sym_lstm.register_into(store, "tprenc.sym");
    role_lstm.register_into(store, "tprenc.role");
  }
}

SelectorInputs tpr_encode_transformer(const Tensor& v, const TprEncoderParams& p,
                                      const std::vector<char>& key_mask, double dropout_p,
                                      Rng* rng) {
  return {transformer_layer(v, p.sym_layer, key_mask, dropout_p, rng),
          transformer_layer(v, p.role_layer, key_mask, dropout_p, rng)};
}

LstmTprTrace tpr_encode_lstm(const Tensor& v, const TprEncoderParams& p,
                             const core::TprParams& tpr) {
  const std::size_t D = tpr.shape().bound_size();
  if (p.sym_lstm.hidden != D || p.role_lstm.hidden != D) {
    throw DimensionError("tpr_encode_lstm: LSTM hidden size must equal d_S·d_R = " +
                         std::to_string(D));
  }
  LstmTprTrace trace;
  Tensor x_prev = Tensor::zeros({1, D});
  Tensor c_sym = Tensor::zeros({1, D});
  Tensor c_role = Tensor::zeros({1, D});
  std::vector<Tensor> a_sym, a_role, bound;
  for (std::size_t t = 0; t < v.rows(); ++t) {
    Tensor vt = slice_rows(v, t, t + 1);
    auto s = lstm_cell(vt, x_prev, c_sym, p.sym_lstm);
    auto r = lstm_cell(vt, x_prev, c_role, p.role_lstm);
    c_sym = s.c;
    c_role = r.c;
    trace.h_sym.push_back(s.h);
    trace.h_role.push_back(r.h);
    Tensor as = core::attend(s.h, tpr.W_S, tpr.temp_sym, &tpr.b_S);
    Tensor ar = core::attend(r.h, tpr.W_R, tpr.temp_role, &tpr.b_R);
    x_prev = core::bind_sequence(as, ar, tpr);
    a_sym.push_back(as);
    a_role.push_back(ar);
    bound.push_back(x_prev);
  }
  trace.a_sym = concat_rows(a_sym);
  trace.a_role = concat_rows(a_role);
  trace.bound = concat_rows(bound);
  return trace;
}

}  // namespace tpr::enc
