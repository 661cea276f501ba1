#include "tpr/model.hpp"

#include "tpr/errors.hpp"
#include "tpr/ops.hpp"

namespace tpr {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::baseline: return "baseline";
    case Family::baseline_lstm: return "baseline+lstm";
    case Family::tpr_lstm: return "tpr-lstm";
    case Family::tpr_transformer: return "tpr-transformer";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::baseline, Family::baseline_lstm, Family::tpr_lstm,
                 Family::tpr_transformer}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown model family '" + std::string(name) +
                    "' (expected baseline, baseline+lstm, tpr-lstm or tpr-transformer)");
}

bool has_tpr_layer(Family f) { return f == Family::tpr_lstm || f == Family::tpr_transformer; }

void ModelConfig::validate() const {
  backbone.validate();
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (has_tpr_layer(family)) {
    if (tpr.d_sym == 0 || tpr.d_role == 0 || tpr.n_role == 0) {
      throw ConfigError("model: TPR dimensions must be positive");
    }
    if (tpr.n_sym <= tpr.n_role) {
      throw ConfigError("model: n_sym (" + std::to_string(tpr.n_sym) +
                        ") must be greater than n_role (" + std::to_string(tpr.n_role) + ")");
    }
    if (!(tpr_opt.temp_sym > 0.0) || !(tpr_opt.temp_role > 0.0)) {
      throw ConfigError("model: temperature must be > 0");
    }
    if (!(tpr_opt.scale_init > 0.0)) throw ConfigError("model: scale must be > 0");
    if (!(tpr_opt.lambda >= 0.0)) throw ConfigError("model: lambda must be >= 0");
    if (post_layer && (post_heads == 0 || tpr.bound_size() % post_heads != 0)) {
      throw ConfigError("model: d_S·d_R must be divisible by post_heads");
    }
  }
  if (aggregation == head::Aggregation::concat_project && proj_dim == 0) {
    throw ConfigError("model: proj_dim must be positive");
  }
}

KvMap ModelConfig::to_kv() const {
  KvMap kv;
  kv["model.family"] = std::string(family_name(family));
  kv["model.vocab"] = std::to_string(backbone.vocab);
  kv["model.hidden"] = std::to_string(backbone.hidden);
  kv["model.layers"] = std::to_string(backbone.layers);
  kv["model.heads"] = std::to_string(backbone.heads);
  kv["model.ff"] = std::to_string(backbone.ff);
  kv["model.max_len"] = std::to_string(backbone.max_len);
  kv["model.dropout"] = format_double(backbone.dropout);
  kv["model.d_sym"] = std::to_string(tpr.d_sym);
  kv["model.d_role"] = std::to_string(tpr.d_role);
  kv["model.n_sym"] = std::to_string(tpr.n_sym);
  kv["model.n_role"] = std::to_string(tpr.n_role);
  kv["model.temp_sym"] = format_double(tpr_opt.temp_sym);
  kv["model.temp_role"] = format_double(tpr_opt.temp_role);
  kv["model.scale_init"] = format_double(tpr_opt.scale_init);
  kv["model.lambda"] = format_double(tpr_opt.lambda);
  kv["model.selector_bias"] = tpr_opt.selector_bias ? "1" : "0";
  kv["model.aggregation"] = std::string(head::aggregation_name(aggregation));
  kv["model.proj_dim"] = std::to_string(proj_dim);
  kv["model.classes"] = std::to_string(num_classes);
  kv["model.lstm_hidden"] = std::to_string(lstm_hidden);
  kv["model.post_layer"] = post_layer ? "1" : "0";
  kv["model.post_heads"] = std::to_string(post_heads);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KvMap& kv) {
  auto u = [&](const char* k) { return static_cast<std::size_t>(std::stoull(kv_get(kv, k))); };
  auto d = [&](const char* k) { return std::stod(kv_get(kv, k)); };
  ModelConfig c;
  c.family = parse_family(kv_get(kv, "model.family"));
  c.backbone.vocab = u("model.vocab");
  c.backbone.hidden = u("model.hidden");
  c.backbone.layers = u("model.layers");
  c.backbone.heads = u("model.heads");
  c.backbone.ff = u("model.ff");
  c.backbone.max_len = u("model.max_len");
  c.backbone.dropout = d("model.dropout");
  c.tpr.d_sym = u("model.d_sym");
  c.tpr.d_role = u("model.d_role");
  c.tpr.n_sym = u("model.n_sym");
  c.tpr.n_role = u("model.n_role");
  c.tpr_opt.temp_sym = d("model.temp_sym");
  c.tpr_opt.temp_role = d("model.temp_role");
  c.tpr_opt.scale_init = d("model.scale_init");
  c.tpr_opt.lambda = d("model.lambda");
  c.tpr_opt.selector_bias = kv_get(kv, "model.selector_bias") == "1";
  c.aggregation = head::parse_aggregation(kv_get(kv, "model.aggregation"));
  c.proj_dim = u("model.proj_dim");
  c.num_classes = u("model.classes");
  c.lstm_hidden = u("model.lstm_hidden");
  c.post_layer = kv_get(kv, "model.post_layer") == "1";
  c.post_heads = u("model.post_heads");
  return c;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto& bb = cfg_.backbone;
  backbone_ = enc::BackboneParams::init(bb, rng);
  backbone_.register_into(store_);

  std::size_t token_dim = bb.hidden;
  std::size_t feature_dim = 0;
  switch (cfg_.family) {
    case Family::baseline:
      break;
    case Family::baseline_lstm: {
      const std::size_t h = cfg_.lstm_hidden ? cfg_.lstm_hidden : bb.hidden;
      top_lstm_ = enc::LstmParams::init(bb.hidden, h, rng);
      top_lstm_->register_into(store_, "tprenc.lstm");
      feature_dim = h;
      break;
    }
    case Family::tpr_lstm:
    case Family::tpr_transformer: {
      const auto kind = cfg_.family == Family::tpr_lstm ? enc::TprEncoderKind::lstm
                                                        : enc::TprEncoderKind::transformer;
      const std::size_t D = cfg_.tpr.bound_size();
      tprenc_ = enc::TprEncoderParams::init(kind, bb.hidden, bb.ff, bb.heads, D, rng);
      tprenc_->register_into(store_);
      const std::size_t selector_in = kind == enc::TprEncoderKind::lstm ? D : bb.hidden;
      tpr_ = core::TprParams::init(cfg_.tpr, selector_in, cfg_.tpr_opt, rng);
      tpr_->register_into(store_);
      if (cfg_.post_layer) {
        post_ = enc::TransformerLayerParams::init(D, D, cfg_.post_heads, rng);
        post_->register_into(store_, "tprenc.post");
      }
      token_dim = D;
      break;
    }
  }
  if (feature_dim == 0) {
    if (cfg_.aggregation == head::Aggregation::concat_project) {
      proj_ = linear_init({cfg_.proj_dim, bb.max_len * token_dim}, bb.max_len * token_dim, rng);
      store_.add("head.proj", proj_);
      feature_dim = cfg_.proj_dim;
    } else {
      feature_dim = token_dim;
    }
  }
  W_f_ = linear_init({cfg_.num_classes, feature_dim}, feature_dim, rng);
  store_.add("head.W_f", W_f_);
}

Model::Output Model::forward(const std::vector<int>& ids, const std::vector<char>& mask,
                             Rng* dropout_rng) const {
  const double p = cfg_.backbone.dropout;
  Output out;
  Tensor v = enc::encode_backbone(ids, mask, backbone_, cfg_.backbone, dropout_rng);

  if (cfg_.family == Family::baseline_lstm) {
    std::size_t n = ids.size();
    if (!mask.empty()) {
      n = 0;
      while (n < mask.size() && mask[n]) ++n;
    }
    out.token_repr = v;
    out.logits = head::logits(enc::lstm_final_state(slice_rows(v, 0, n), *top_lstm_), W_f_);
    return out;
  }

  Tensor tokens = v;
  if (cfg_.family == Family::tpr_transformer) {
    auto h = enc::tpr_encode_transformer(v, *tprenc_, mask, p, dropout_rng);
    out.sym_attn = core::attend(h.h_sym, tpr_->W_S, tpr_->temp_sym, &tpr_->b_S);
    out.role_attn = core::attend(h.h_role, tpr_->W_R, tpr_->temp_role, &tpr_->b_R);
    tokens = core::bind_sequence(out.sym_attn, out.role_attn, *tpr_);
  } else if (cfg_.family == Family::tpr_lstm) {
    auto trace = enc::tpr_encode_lstm(v, *tprenc_, *tpr_);
    out.sym_attn = trace.a_sym;
    out.role_attn = trace.a_role;
    tokens = trace.bound;
  }
  if (post_) tokens = enc::transformer_layer(tokens, *post_, mask, p, dropout_rng);
  out.token_repr = tokens;
  Tensor f = head::aggregate(tokens, mask, cfg_.aggregation, proj_.defined() ? &proj_ : nullptr);
  out.logits = head::logits(f, W_f_);
  return out;
}

Tensor Model::penalty() const {
  if (!tpr_) return Tensor::scalar(0.0);
  return core::orthogonality_penalty(tpr_->R, tpr_->lambda);
}

}  // namespace tpr
