#include "tpr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tpr/errors.hpp"
#include "tpr/simd.hpp"

namespace tpr {
namespace {

using detail::Node;

std::vector<double>* grad_of(Node& n, std::size_t i) {
  auto& p = *n.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

const std::vector<double>& value_of(const Node& n, std::size_t i) {
  return n.parents[i]->value;
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.dim() != 2 && a.dim() != 1) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  const auto& x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return Tensor::make(a.shape(), std::move(y), {a}, [dfdx](Node& n) {
    auto* ga = grad_of(n, 0);
    if (!ga) return;
    const auto& x = value_of(n, 0);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += n.grad[i] * dfdx(x[i], n.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b);
  std::vector<double> c(m * n, 0.0);
  simd::active().gemm_nn(m, n, k, a.values().data(), b.values().data(), c.data());
  return Tensor::make({m, n}, std::move(c), {a, b}, [m, k, n](Node& node) {
    const auto& kt = simd::active();
    if (auto* ga = grad_of(node, 0)) {
      kt.gemm_nt(m, k, n, node.grad.data(), value_of(node, 1).data(), ga->data());
    }
    if (auto* gb = grad_of(node, 1)) {
      kt.gemm_tn(k, n, m, value_of(node, 0).data(), node.grad.data(), gb->data());
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) mismatch("matmul_nt", a, b);
  std::vector<double> c(m * n, 0.0);
  simd::active().gemm_nt(m, n, k, a.values().data(), b.values().data(), c.data());
  return Tensor::make({m, n}, std::move(c), {a, b}, [m, k, n](Node& node) {
    const auto& kt = simd::active();
    if (auto* ga = grad_of(node, 0)) {
      kt.gemm_nn(m, k, n, node.grad.data(), value_of(node, 1).data(), ga->data());
    }
    if (auto* gb = grad_of(node, 1)) {
      kt.gemm_tn(n, k, m, node.grad.data(), value_of(node, 0).data(), gb->data());
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  std::vector<double> y(a.size());
  simd::active().add(y.size(), a.values().data(), b.values().data(), y.data());
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* g = grad_of(n, i)) simd::active().axpy(n.grad.size(), 1.0, n.grad.data(), g->data());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("sub", a, b);
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& n) {
    if (auto* g = grad_of(n, 0)) simd::active().axpy(n.grad.size(), 1.0, n.grad.data(), g->data());
    if (auto* g = grad_of(n, 1)) simd::active().axpy(n.grad.size(), -1.0, n.grad.data(), g->data());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  std::vector<double> y(a.size());
  simd::active().mul(y.size(), a.values().data(), b.values().data(), y.data());
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& n) {
    const auto& av = value_of(n, 0);
    const auto& bv = value_of(n, 1);
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    }
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] += n.grad[i] * av[i];
    }
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_matrix("add_rowvec", a);
  const std::size_t m = a.rows(), c = a.cols();
  if (b.size() != c) mismatch("add_rowvec", a, b);
  std::vector<double> y(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < m; ++i) {
    simd::active().axpy(c, 1.0, b.values().data(), y.data() + i * c);
  }
  return Tensor::make(a.shape(), std::move(y), {a, b}, [m, c](Node& n) {
    if (auto* g = grad_of(n, 0)) simd::active().axpy(n.grad.size(), 1.0, n.grad.data(), g->data());
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        simd::active().axpy(c, 1.0, n.grad.data() + i * c, g->data());
      }
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * c;
  return Tensor::make(a.shape(), std::move(y), {a}, [c](Node& n) {
    if (auto* g = grad_of(n, 0)) simd::active().axpy(n.grad.size(), c, n.grad.data(), g->data());
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) mismatch("mul_scalar", a, s);
  const double c = s[0];
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * c;
  return Tensor::make(a.shape(), std::move(y), {a, s}, [](Node& n) {
    const double c = value_of(n, 1)[0];
    if (auto* g = grad_of(n, 0)) simd::active().axpy(n.grad.size(), c, n.grad.data(), g->data());
    if (auto* g = grad_of(n, 1)) {
      (*g)[0] += simd::active().dot(n.grad.size(), n.grad.data(), value_of(n, 0).data());
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(k * (x + c * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
      });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), c = a.cols();
  std::vector<double> y(m * c);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * m + i] = a[i * c + j];
  return Tensor::make({c, m}, std::move(y), {a}, [m, c](Node& n) {
    auto* g = grad_of(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += n.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> y(a.values().begin(), a.values().end());
  return Tensor::make(std::move(shape), std::move(y), {a}, [](Node& n) {
    if (auto* g = grad_of(n, 0)) simd::active().axpy(n.grad.size(), 1.0, n.grad.data(), g->data());
  });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  const std::size_t m = u.size(), c = v.size();
  std::vector<double> y(m * c);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = u[i] * v[j];
  return Tensor::make({m, c}, std::move(y), {u, v}, [m, c](Node& n) {
    const auto& uv = value_of(n, 0);
    const auto& vv = value_of(n, 1);
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < m; ++i) (*g)[i] += simd::active().dot(c, n.grad.data() + i * c, vv.data());
    }
    if (auto* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < m; ++i) simd::active().axpy(c, uv[i], n.grad.data() + i * c, g->data());
    }
  });
}

Tensor rowwise_outer(const Tensor& s, const Tensor& r) {
  require_matrix("rowwise_outer", s);
  require_matrix("rowwise_outer", r);
  const std::size_t t = s.rows(), a = s.cols(), b = r.cols();
  if (r.rows() != t) mismatch("rowwise_outer", s, r);
  std::vector<double> y(t * a * b);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j) y[(k * a + i) * b + j] = s[k * a + i] * r[k * b + j];
  return Tensor::make({t, a * b}, std::move(y), {s, r}, [t, a, b](Node& n) {
    const auto& sv = value_of(n, 0);
    const auto& rv = value_of(n, 1);
    const auto& kt = simd::active();
    auto* gs = grad_of(n, 0);
    auto* gr = grad_of(n, 1);
    for (std::size_t k = 0; k < t; ++k) {
      for (std::size_t i = 0; i < a; ++i) {
        const double* go = n.grad.data() + (k * a + i) * b;
        if (gs) (*gs)[k * a + i] += kt.dot(b, go, rv.data() + k * b);
        if (gr) kt.axpy(b, sv[k * a + i], go, gr->data() + k * b);
      }
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (p.cols() != c) mismatch("concat_rows", parts[0], p);
    total += p.rows();
  }
  std::vector<double> y;
  y.reserve(total * c);
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  return Tensor::make({total, c}, std::move(y), parts, [](Node& n) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const std::size_t len = n.parents[i]->value.size();
      if (auto* g = grad_of(n, i)) simd::active().axpy(len, 1.0, n.grad.data() + off, g->data());
      off += len;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.rows() != m) mismatch("concat_cols", parts[0], p);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> y(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        y[i * total + off + j] = parts[k][i * widths[k] + j];
    off += widths[k];
  }
  return Tensor::make({m, total}, std::move(y), parts, [m, total, widths](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* g = grad_of(n, k)) {
        for (std::size_t i = 0; i < m; ++i)
          simd::active().axpy(widths[k], 1.0, n.grad.data() + i * total + off,
                              g->data() + i * widths[k]);
      }
      off += widths[k];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix("slice_rows", a);
  const std::size_t c = a.cols();
  if (begin > end || end > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + shape_str(a.shape()));
  }
  std::vector<double> y(a.values().begin() + begin * c, a.values().begin() + end * c);
  return Tensor::make({end - begin, c}, std::move(y), {a}, [begin, c](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      simd::active().axpy(n.grad.size(), 1.0, n.grad.data(), g->data() + begin * c);
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix("slice_cols", a);
  const std::size_t m = a.rows(), c = a.cols();
  if (begin > end || end > c) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> y(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = a[i * c + begin + j];
  return Tensor::make({m, w}, std::move(y), {a}, [m, c, w, begin](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        simd::active().axpy(w, 1.0, n.grad.data() + i * w, g->data() + i * c + begin);
    }
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_matrix("gather_rows", table);
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> y(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[t]) +
                           " outside table " + shape_str(table.shape()));
    }
    std::copy_n(table.values().begin() + ids[t] * d, d, y.begin() + t * d);
  }
  return Tensor::make({ids.size(), d}, std::move(y), {table}, [ids, d](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t t = 0; t < ids.size(); ++t)
        simd::active().axpy(d, 1.0, n.grad.data() + t * d, g->data() + ids[t] * d);
    }
  });
}

Tensor sum(const Tensor& a) {
  const double s = simd::sum(a.values());
  return Tensor::make({1}, {s}, {a}, [](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (auto& x : *g) x += n.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor max(const Tensor& a) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] > a[arg]) arg = i;
  return Tensor::make({1}, {a[arg]}, {a}, [arg](Node& n) {
    if (auto* g = grad_of(n, 0)) (*g)[arg] += n.grad[0];
  });
}

namespace {

std::vector<std::size_t> active_rows(const Tensor& a, const std::vector<char>& mask,
                                     const char* op) {
  const std::size_t m = a.rows();
  if (!mask.empty() && mask.size() != m) {
    throw DimensionError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                         " vs " + shape_str(a.shape()));
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m; ++i)
    if (mask.empty() || mask[i]) rows.push_back(i);
  if (rows.empty()) throw DataError(std::string(op) + ": no unmasked rows");
  return rows;
}

}  // namespace

Tensor mean_rows(const Tensor& a, const std::vector<char>& mask) {
  require_matrix("mean_rows", a);
  const auto rows = active_rows(a, mask, "mean_rows");
  const std::size_t c = a.cols();
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<double> y(c, 0.0);
  for (auto i : rows) simd::active().axpy(c, inv, a.values().data() + i * c, y.data());
  return Tensor::make({1, c}, std::move(y), {a}, [rows, c, inv](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (auto i : rows) simd::active().axpy(c, inv, n.grad.data(), g->data() + i * c);
    }
  });
}

Tensor max_rows(const Tensor& a, const std::vector<char>& mask) {
  require_matrix("max_rows", a);
  const auto rows = active_rows(a, mask, "max_rows");
  const std::size_t c = a.cols();
  std::vector<std::size_t> arg(c, rows[0]);
  std::vector<double> y(c);
  for (std::size_t j = 0; j < c; ++j) {
    for (auto i : rows)
      if (a[i * c + j] > a[arg[j] * c + j]) arg[j] = i;
    y[j] = a[arg[j] * c + j];
  }
  return Tensor::make({1, c}, std::move(y), {a}, [arg, c](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t j = 0; j < c; ++j) (*g)[arg[j] * c + j] += n.grad[j];
    }
  });
}

Tensor frobenius_sq(const Tensor& a) {
  const double s = simd::dot(a.values(), a.values());
  return Tensor::make({1}, {s}, {a}, [](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      simd::active().axpy(g->size(), 2.0 * n.grad[0], value_of(n, 0).data(), g->data());
    }
  });
}

Tensor apply_mask(const Tensor& a, std::vector<double> mask) {
  if (mask.size() != a.size()) {
    throw DimensionError("apply_mask: mask of " + std::to_string(mask.size()) +
                         " vs " + shape_str(a.shape()));
  }
  std::vector<double> y(a.size());
  simd::active().mul(y.size(), a.values().data(), mask.data(), y.data());
  return Tensor::make(a.shape(), std::move(y), {a}, [mask = std::move(mask)](Node& n) {
    if (auto* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) (*g)[i] += n.grad[i] * mask[i];
    }
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ParameterError("dropout: probability must be < 1");
  std::vector<double> mask(a.size());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  return apply_mask(a, std::move(mask));
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix("layer_norm", a);
  const std::size_t m = a.rows(), c = a.cols();
  if (gain.size() != c) mismatch("layer_norm", a, gain);
  if (bias.size() != c) mismatch("layer_norm", a, bias);
  std::vector<double> xhat(m * c), inv_std(m), y(m * c);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[j] - mu) * inv_std[i];
      y[i * c + j] = gain[j] * xhat[i * c + j] + bias[j];
    }
  }
  return Tensor::make(a.shape(), std::move(y), {a, gain, bias},
                      [m, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                        const auto& g = value_of(n, 1);
                        auto* ga = grad_of(n, 0);
                        auto* gg = grad_of(n, 1);
                        auto* gb = grad_of(n, 2);
                        std::vector<double> dxhat(c);
                        for (std::size_t i = 0; i < m; ++i) {
                          const double* dy = n.grad.data() + i * c;
                          const double* xh = xhat.data() + i * c;
                          if (gg)
                            for (std::size_t j = 0; j < c; ++j) (*gg)[j] += dy[j] * xh[j];
                          if (gb)
                            for (std::size_t j = 0; j < c; ++j) (*gb)[j] += dy[j];
                          if (!ga) continue;
                          double mean_d = 0.0, mean_dx = 0.0;
                          for (std::size_t j = 0; j < c; ++j) {
                            dxhat[j] = dy[j] * g[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xh[j];
                          }
                          mean_d /= static_cast<double>(c);
                          mean_dx /= static_cast<double>(c);
                          for (std::size_t j = 0; j < c; ++j)
                            (*ga)[i * c + j] += inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
                        }
                      });
}

Tensor softmax(const Tensor& z, double temperature, const std::vector<char>& key_mask) {
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature must be > 0");
  const std::size_t m = z.dim() <= 1 ? 1 : z.rows();
  const std::size_t c = z.dim() <= 1 ? z.size() : z.cols();
  if (!key_mask.empty() && key_mask.size() != c) {
    throw DimensionError("softmax: key mask of " + std::to_string(key_mask.size()) +
                         " vs " + shape_str(z.shape()));
  }
  const double inv_t = 1.0 / temperature;
  std::vector<double> y(m * c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* zi = z.values().data() + i * c;
    double* yi = y.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (key_mask.empty() || key_mask[j]) mx = std::max(mx, zi[j] * inv_t);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax: every entry of a row is masked");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!key_mask.empty() && !key_mask[j]) continue;
      yi[j] = std::exp(zi[j] * inv_t - mx);
      s += yi[j];
    }
    for (std::size_t j = 0; j < c; ++j) yi[j] /= s;
  }
  return Tensor::make(z.shape(), std::move(y), {z}, [m, c, inv_t](Node& n) {
    auto* g = grad_of(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* yi = n.value.data() + i * c;
      const double* dy = n.grad.data() + i * c;
      const double inner = simd::active().dot(c, dy, yi);
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += inv_t * yi[j] * (dy[j] - inner);
    }
  });
}

Tensor log_softmax(const Tensor& z) {
  const std::size_t m = z.dim() <= 1 ? 1 : z.rows();
  const std::size_t c = z.dim() <= 1 ? z.size() : z.cols();
  std::vector<double> y(m * c);
  for (std::size_t i = 0; i < m; ++i) {
    const double* zi = z.values().data() + i * c;
    const double mx = simd::active().max(c, zi);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(zi[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = zi[j] - lse;
  }
  return Tensor::make(z.shape(), std::move(y), {z}, [m, c](Node& n) {
    auto* g = grad_of(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* dy = n.grad.data() + i * c;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += dy[j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += dy[j] - std::exp(n.value[i * c + j]) * s;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t m = logits.dim() <= 1 ? 1 : logits.rows();
  const std::size_t c = logits.dim() <= 1 ? logits.size() : logits.cols();
  if (labels.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  std::vector<double> probs(m * c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                      " outside [0," + std::to_string(c) + ")");
    }
    const double* zi = logits.values().data() + i * c;
    const double mx = simd::active().max(c, zi);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(zi[j] - mx);
      s += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    total += mx + std::log(s) - zi[labels[i]];
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  return Tensor::make({1}, {total * inv_m}, {logits},
                      [m, c, inv_m, labels, probs = std::move(probs)](Node& n) {
                        auto* g = grad_of(n, 0);
                        if (!g) return;
                        const double up = n.grad[0] * inv_m;
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                            const double t = (static_cast<int>(j) == labels[i]) ? 1.0 : 0.0;
                            (*g)[i * c + j] += up * (probs[i * c + j] - t);
                          }
                        }
                      });
}

}  // namespace tpr
