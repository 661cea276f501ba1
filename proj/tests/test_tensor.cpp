#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "tpr/errors.hpp"
#include "tpr/gradcheck.hpp"
#include "tpr/ops.hpp"
#include "tpr/params.hpp"

using namespace tpr;

namespace {

Tensor rand_t(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(s), std::move(v));
}

// Weighted sum so every output element carries a distinct upstream gradient.
Tensor probe_loss(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, rand_t(out.shape(), rng)));
}

double fd_error(const std::vector<Tensor>& inputs, const std::function<Tensor()>& f) {
  ParamStore store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), inputs[i]);
  auto rep = gradcheck::check(store, [&] { return probe_loss(f(), 99); }, 1e-5);
  return rep.max_rel_error;
}

}  // namespace

TEST_CASE("matmul examples") {
  const auto m = Tensor::from({2, 2}, {1.5, -2, 0.25, 4});
  const auto im = matmul(Tensor::identity(2), m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(im[i] == m[i]);

  const auto r = matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {1, 1}));
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 7.0);

  Rng rng(1);
  const auto a = rand_t({3, 4}, rng), b = rand_t({4, 2}, rng);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - s) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string w = e.what();
    CHECK(w.find(shape_str({2, 3})) != std::string::npos);
    CHECK(w.find(shape_str({4, 5})) != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  const auto u = softmax(Tensor::from({3}, {0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(u[i] - 1.0 / 3.0) < 1e-15);

  const auto big = softmax(Tensor::from({2}, {1000, 0}));
  CHECK(std::isfinite(big[0]));
  CHECK(std::abs(big[0] - 1.0) < 1e-12);
  CHECK(std::abs(big[1]) < 1e-12);

  const auto p = softmax(Tensor::from({2}, {1, 2}));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(std::abs(p[0] - e1 / (e1 + e2)) < 1e-12);
  CHECK(std::abs(p[1] - e2 / (e1 + e2)) < 1e-12);
}

TEST_CASE("softmax stays on the simplex for finite inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    const double spread = std::pow(10.0, rng.uniform(-3, 3));
    const auto z = softmax(rand_t({n}, rng, -spread, spread));
    double s = 0.0;
    for (double v : z.values()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("backward examples") {
  auto w = Tensor::zeros({2, 3}, true);
  backward(sum(w));
  for (double g : w.grad()) CHECK(g == 1.0);

  auto x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), ContractError);
}

TEST_CASE("disjoint branches accumulate") {
  auto x = Tensor::from({3}, {0.5, -1, 2}, true);
  backward(add(sum(scale(x, 2.0)), sum(mul(x, x))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x.grad()[i] - (2.0 + 2.0 * x[i])) < 1e-14);

  // Leaf grads also accumulate across separate backward calls.
  backward(sum(x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x.grad()[i] - (3.0 + 2.0 * x[i])) < 1e-14);
}

TEST_CASE("no-grad guard records nothing") {
  auto x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard g;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("random composite matches finite differences") {
  Rng rng(11);
  const auto a = rand_t({3, 4}, rng), b = rand_t({4, 5}, rng), c = rand_t({5, 2}, rng);
  const double err = fd_error({a, b, c}, [&] {
    auto h = tanh(matmul(a, b));
    auto s = softmax(h, 1.0);
    return sigmoid(matmul(s, c));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(5);
  const auto A = rand_t({3, 4}, rng), B = rand_t({3, 4}, rng), C = rand_t({4, 2}, rng);
  const auto D = rand_t({2, 4}, rng), v = rand_t({4}, rng), u = rand_t({3}, rng);
  const auto pos = rand_t({3, 4}, rng, 0.5, 2.0);
  const auto s = rand_t({1}, rng);
  const auto g = rand_t({4}, rng), bias = rand_t({4}, rng);

  struct Case {
    const char* name;
    std::vector<Tensor> in;
    std::function<Tensor()> f;
  };
  std::vector<Case> cases{
      {"matmul", {A, C}, [&] { return matmul(A, C); }},
      {"matmul_nt", {A, D}, [&] { return matmul_nt(A, D); }},
      {"add", {A, B}, [&] { return add(A, B); }},
      {"sub", {A, B}, [&] { return sub(A, B); }},
      {"mul", {A, B}, [&] { return mul(A, B); }},
      {"add_rowvec", {A, v}, [&] { return add_rowvec(A, v); }},
      {"scale", {A}, [&] { return scale(A, -1.7); }},
      {"mul_scalar", {A, s}, [&] { return mul_scalar(A, s); }},
      {"tanh", {A}, [&] { return tanh(A); }},
      {"sigmoid", {A}, [&] { return sigmoid(A); }},
      {"gelu", {A}, [&] { return gelu(A); }},
      {"log", {pos}, [&] { return log(pos); }},
      {"exp", {A}, [&] { return exp(A); }},
      {"transpose", {A}, [&] { return transpose(A); }},
      {"reshape", {A}, [&] { return reshape(A, {2, 6}); }},
      {"outer", {u, v}, [&] { return outer(u, v); }},
      {"rowwise_outer", {A, B}, [&] { return rowwise_outer(A, B); }},
      {"concat_rows", {A, D}, [&] { return concat_rows({A, D}); }},
      {"concat_cols", {A, B}, [&] { return concat_cols({A, B}); }},
      {"slice_rows", {A}, [&] { return slice_rows(A, 1, 3); }},
      {"slice_cols", {A}, [&] { return slice_cols(A, 1, 3); }},
      {"gather_rows", {A}, [&] { return gather_rows(A, {2, 0, 2}); }},
      {"sum", {A}, [&] { return sum(A); }},
      {"mean", {A}, [&] { return mean(A); }},
      {"max", {A}, [&] { return max(A); }},
      {"mean_rows", {A}, [&] { return mean_rows(A, {1, 0, 1}); }},
      {"max_rows", {A}, [&] { return max_rows(A); }},
      {"frobenius_sq", {A}, [&] { return frobenius_sq(A); }},
      {"apply_mask", {A}, [&] { return apply_mask(A, std::vector<double>(12, 0.5)); }},
      {"layer_norm", {A, g, bias}, [&] { return layer_norm(A, g, bias); }},
      {"softmax", {A}, [&] { return softmax(A, 0.6); }},
      {"softmax_masked", {A}, [&] { return softmax(A, 1.0, {1, 0, 1, 1}); }},
      {"log_softmax", {A}, [&] { return log_softmax(A); }},
      {"cross_entropy", {A}, [&] { return cross_entropy(A, {0, 3, 1}); }},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(fd_error(c.in, c.f) < 1e-5);
  }
}

TEST_CASE("dropout keeps expectation and is identity at p=0") {
  Rng rng(8);
  const auto a = Tensor::full({100, 100}, 1.0);
  const auto same = dropout(a, 0.0, rng);
  for (double x : same.values()) CHECK(x == 1.0);
  const auto d = dropout(a, 0.25, rng);
  double s = 0.0;
  for (double x : d.values()) {
    CHECK((x == 0.0 || std::abs(x - 1.0 / 0.75) < 1e-15));
    s += x;
  }
  CHECK(std::abs(s / 10000.0 - 1.0) < 0.05);
}

TEST_CASE("library ops keep finite values finite") {
  Rng rng(2);
  const auto a = rand_t({4, 4}, rng, -50, 50);
  for (const auto& t : {softmax(a), log_softmax(a), sigmoid(a), tanh(a), exp(scale(a, 0.1)),
                        layer_norm(a, Tensor::full({4}, 1.0), Tensor::zeros({4}))}) {
    for (double x : t.values()) CHECK(std::isfinite(x));
  }
}
