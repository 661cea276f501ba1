#include <cmath>
#include <vector>

#include "doctest.h"
#include "tpr/errors.hpp"
#include "tpr/gradcheck.hpp"
#include "tpr/model.hpp"
#include "tpr/ops.hpp"

using namespace tpr;

namespace {

enc::BackboneConfig tiny_backbone(std::size_t layers = 1) {
  enc::BackboneConfig c;
  c.vocab = 11;
  c.hidden = 8;
  c.layers = layers;
  c.heads = 2;
  c.ff = 12;
  c.max_len = 7;
  c.dropout = 0.0;
  return c;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_values()) v = 0.0;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("zero-layer backbone is embedding plus position") {
  auto cfg = tiny_backbone(0);
  Rng rng(1);
  const auto p = enc::BackboneParams::init(cfg, rng);
  const auto v = enc::encode_backbone({5}, {}, p, cfg, nullptr);
  CHECK(v.shape() == Shape{1, 8});
  for (std::size_t j = 0; j < 8; ++j) CHECK(v[j] == p.tok_emb.at(5, j) + p.pos_emb.at(0, j));
}

TEST_CASE("backbone output length equals input length; overlong input is rejected") {
  auto cfg = tiny_backbone();
  Rng rng(2);
  const auto p = enc::BackboneParams::init(cfg, rng);
  CHECK(enc::encode_backbone({1, 4, 5, 2}, {}, p, cfg, nullptr).rows() == 4);
  CHECK_THROWS_AS(enc::encode_backbone(std::vector<int>(8, 4), {}, p, cfg, nullptr), LengthError);
}

TEST_CASE("without positions, permuting tokens permutes outputs") {
  auto cfg = tiny_backbone(2);
  Rng rng(3);
  auto p = enc::BackboneParams::init(cfg, rng);
  zero(p.pos_emb);
  const auto a = enc::encode_backbone({4, 7, 9}, {}, p, cfg, nullptr);
  const auto b = enc::encode_backbone({4, 9, 7}, {}, p, cfg, nullptr);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::abs(a.at(0, j) - b.at(0, j)) < 1e-12);
    CHECK(std::abs(a.at(1, j) - b.at(2, j)) < 1e-12);
    CHECK(std::abs(a.at(2, j) - b.at(1, j)) < 1e-12);
  }
}

TEST_CASE("backbone gradients match finite differences") {
  auto cfg = tiny_backbone();
  Rng rng(4);
  auto p = enc::BackboneParams::init(cfg, rng);
  ParamStore store;
  p.register_into(store);
  // Non-trivial layer-norm parameters so their gradients are exercised.
  Rng jitter(5);
  for (auto& [name, t] : store)
    for (auto& v : t.mutable_values()) v += jitter.uniform(-0.1, 0.1);
  const std::vector<int> ids{1, 6, 3, 9, 2};
  auto rep = gradcheck::check(store, [&] {
    auto out = enc::encode_backbone(ids, {}, p, cfg, nullptr);
    return mean(mul(out, out));
  }, 1e-4);
  CHECK(rep.pass);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("zeroed attention output and feed-forward reduce to double layer norm") {
  Rng rng(6);
  auto p = enc::TprEncoderParams::init(enc::TprEncoderKind::transformer, 8, 12, 2, 0, rng);
  for (auto* layer : {&p.sym_layer, &p.role_layer}) {
    zero(layer->wo);
    zero(layer->ff2_w);
  }
  const auto v = uniform_tensor({4, 8}, 2.0, rng);
  const auto h = enc::tpr_encode_transformer(v, p, {}, 0.0, nullptr);
  const auto& L = p.sym_layer;
  const auto want = layer_norm(layer_norm(v, L.ln1_g, L.ln1_b), L.ln2_g, L.ln2_b);
  CHECK(max_diff(h.h_sym.values(), want.values()) < 1e-12);
  CHECK(max_diff(h.h_role.values(), want.values()) < 1e-12);
}

TEST_CASE("the two selector encoders are independent") {
  Rng rng(7);
  const auto p = enc::TprEncoderParams::init(enc::TprEncoderKind::transformer, 8, 12, 2, 0, rng);
  const auto v = uniform_tensor({3, 8}, 1.0, rng);
  const auto h = enc::tpr_encode_transformer(v, p, {}, 0.0, nullptr);
  CHECK(h.h_sym.shape() == Shape{3, 8});
  CHECK(h.h_role.shape() == Shape{3, 8});
  CHECK(max_diff(h.h_sym.values(), h.h_role.values()) > 1e-3);
}

TEST_CASE("lstm cell fixed point at zero") {
  Rng rng(8);
  auto p = enc::LstmParams::init(3, 4, rng);
  const auto s = enc::lstm_cell(Tensor::zeros({1, 3}), Tensor::zeros({1, 4}), Tensor::zeros({1, 4}), p);
  for (double v : s.h.values()) CHECK(v == 0.0);
  for (double v : s.c.values()) CHECK(v == 0.0);
}

TEST_CASE("recurrent TPR layer matches a hand-unrolled reference") {
  Rng rng(9);
  core::TprOptions opt;
  opt.scale_init = 1.3;
  opt.temp_sym = 0.8;
  opt.temp_role = 1.4;
  const core::TprShape shape{2, 2, 5, 3};
  const std::size_t D = shape.bound_size(), hid = 3;
  auto tpr = core::TprParams::init(shape, D, opt, rng);
  auto p = enc::TprEncoderParams::init(enc::TprEncoderKind::lstm, hid, 0, 1, D, rng);
  for (auto* l : {&p.sym_lstm, &p.role_lstm})
    for (auto& b : l->b.mutable_values()) b = rng.uniform(-0.5, 0.5);
  const auto v = uniform_tensor({3, hid}, 1.0, rng);

  SUBCASE("length-1 sequence sees a zero recurrent input") {
    const auto one = slice_rows(v, 0, 1);
    const auto tr = enc::tpr_encode_lstm(one, p, tpr);
    const auto cell = enc::lstm_cell(one, Tensor::zeros({1, D}), Tensor::zeros({1, D}), p.sym_lstm);
    CHECK(max_diff(tr.h_sym[0].values(), cell.h.values()) == 0.0);
  }

  const auto tr = enc::tpr_encode_lstm(v, p, tpr);

  auto cell = [&](const enc::LstmParams& L, const std::vector<double>& x,
                  const std::vector<double>& h, std::vector<double>& c) {
    std::vector<double> out(D);
    for (std::size_t u = 0; u < D; ++u) {
      double z[4];
      for (int g = 0; g < 4; ++g) {
        const std::size_t col = g * D + u;
        double s = L.b[col];
        for (std::size_t k = 0; k < hid; ++k) s += x[k] * L.w_ih[k * 4 * D + col];
        for (std::size_t k = 0; k < D; ++k) s += h[k] * L.w_hh[k * 4 * D + col];
        z[g] = s;
      }
      c[u] = sigm(z[1]) * c[u] + sigm(z[0]) * std::tanh(z[2]);
      out[u] = sigm(z[3]) * std::tanh(c[u]);
    }
    return out;
  };
  auto select = [&](const std::vector<double>& h, const Tensor& W, double T) {
    std::vector<double> z(W.rows());
    double mx = -1e300, s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      for (std::size_t k = 0; k < h.size(); ++k) z[i] += W[i * h.size() + k] * h[k];
      mx = std::max(mx, z[i] / T);
    }
    for (auto& e : z) s += (e = std::exp(e / T - mx));
    for (auto& e : z) e /= s;
    return z;
  };

  std::vector<double> x_prev(D, 0.0), cs(D, 0.0), cr(D, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> vt(v.values().begin() + t * hid, v.values().begin() + (t + 1) * hid);
    const auto hs = cell(p.sym_lstm, vt, x_prev, cs);
    const auto hr = cell(p.role_lstm, vt, x_prev, cr);
    const auto as = select(hs, tpr.W_S, tpr.temp_sym);
    const auto ar = select(hr, tpr.W_R, tpr.temp_role);
    for (std::size_t i = 0; i < shape.d_sym; ++i)
      for (std::size_t j = 0; j < shape.d_role; ++j) {
        double fi = 0.0, rj = 0.0;
        for (std::size_t k = 0; k < shape.n_sym; ++k) fi += tpr.S[i * shape.n_sym + k] * as[k];
        for (std::size_t k = 0; k < shape.n_role; ++k) rj += tpr.R[j * shape.n_role + k] * ar[k];
        x_prev[i * shape.d_role + j] = tpr.scale[0] * fi * rj;
      }
    CHECK(max_diff(tr.h_sym[t].values(), hs) < 1e-12);
    CHECK(max_diff(tr.h_role[t].values(), hr) < 1e-12);
    CHECK(max_diff(slice_rows(tr.bound, t, t + 1).values(), x_prev) < 1e-12);
  }
}

namespace {

ModelConfig family_config(Family f) {
  auto c = gradcheck::tiny_config(f);
  c.backbone.max_len = 8;
  return c;
}

}  // namespace

TEST_CASE("forward is deterministic for a fixed seed") {
  for (Family f : {Family::baseline, Family::baseline_lstm, Family::tpr_lstm, Family::tpr_transformer}) {
    CAPTURE(family_name(f));
    const Model a(family_config(f), 5), b(family_config(f), 5);
    const std::vector<int> ids{1, 4, 6, 2, 8, 2};
    const auto la = a.forward(ids).logits, lb = b.forward(ids).logits;
    CHECK(max_diff(la.values(), lb.values()) == 0.0);
  }
}

TEST_CASE("padding never influences real positions") {
  auto cfg = tiny_backbone(2);
  Rng rng(10);
  const auto p = enc::BackboneParams::init(cfg, rng);
  const std::vector<char> mask{1, 1, 1, 0, 0};
  const auto a = enc::encode_backbone({1, 5, 2, 0, 0}, mask, p, cfg, nullptr);
  const auto b = enc::encode_backbone({1, 5, 2, 9, 7}, mask, p, cfg, nullptr);
  CHECK(max_diff(slice_rows(a, 0, 3).values(), slice_rows(b, 0, 3).values()) < 1e-12);

  for (Family f : {Family::baseline, Family::tpr_transformer}) {
    CAPTURE(family_name(f));
    const Model m(family_config(f), 3);
    const auto la = m.forward({1, 5, 2, 0, 0}, mask).logits;
    const auto lb = m.forward({1, 5, 2, 9, 7}, mask).logits;
    CHECK(max_diff(la.values(), lb.values()) < 1e-12);
  }
}

TEST_CASE("every parameter receives gradient on a random batch") {
  for (Family f : {Family::baseline, Family::baseline_lstm, Family::tpr_lstm, Family::tpr_transformer}) {
    CAPTURE(family_name(f));
    auto cfg = family_config(f);
    Model m(cfg, 11);
    const auto batch = gradcheck::tiny_batch(cfg, 12, 6);
    m.params().zero_grad();
    backward(gradcheck::model_loss(m, batch));
    for (const auto& [name, t] : m.params()) {
      CAPTURE(name);
      double norm = 0.0;
      for (double g : t.grad()) norm += g * g;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("gradient suite passes for every family") {
  for (Family f : {Family::baseline, Family::baseline_lstm, Family::tpr_lstm, Family::tpr_transformer}) {
    CAPTURE(family_name(f));
    const auto rep = gradcheck::check_family(f, 1);
    CHECK(rep.pass);
  }
}
