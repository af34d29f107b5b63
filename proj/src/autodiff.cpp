#include "volseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "volseg/errors.hpp"

namespace volseg::ad {

namespace {

using NodePtr = std::shared_ptr<Node>;

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value in ") + what);
  }
}

std::span<double> grad_of(Node* n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  return n->grad;
}

Tensor make_op(std::size_t rows, std::size_t cols, std::vector<double> value,
               std::vector<NodePtr> parents, std::function<void(const Node&)> fn,
               const char* name) {
  check_finite(value, name);
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  node->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

void require_row(const Tensor& a, const Tensor& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ValidationError(std::string(op) + ": row operand must be 1x" + std::to_string(a.cols()));
  }
}

void validate_ranges(std::span<const KeyRange> ranges, std::size_t rows, std::size_t cols) {
  if (ranges.empty()) return;
  if (ranges.size() != rows) throw ValidationError("key ranges must cover every row");
  for (const auto& r : ranges) {
    if (r.begin >= r.end || r.end > cols) throw ValidationError("invalid key range");
  }
}

KeyRange range_for(std::span<const KeyRange> ranges, std::size_t row, std::size_t cols) {
  return ranges.empty() ? KeyRange{0, cols} : ranges[row];
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv, const char* name) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  Node* pa = a.node().get();
  return make_op(a.rows(), a.cols(), std::move(out), {a.node()},
                 [pa, deriv](const Node& self) {
                   auto g = grad_of(pa);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     g[i] += self.grad[i] * deriv(pa->value[i], self.value[i]);
                   }
                 },
                 name);
}

void check_binary(std::span<const double> t, const char* op) {
  for (double v : t) {
    if (v != 0.0 && v != 1.0) throw ValidationError(std::string(op) + ": target must be binary");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return leaf(rows, cols, std::move(values), false);
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::leaf(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (rows == 0 || cols == 0) throw ValidationError("tensor dimensions must be positive");
  if (values.size() != rows * cols) {
    throw ValidationError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  check_finite(values, "leaf");
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

std::size_t Tensor::rows() const { return node_->rows; }
std::size_t Tensor::cols() const { return node_->cols; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }
std::span<const double> Tensor::grad() const { return node_->grad; }

double Tensor::item() const {
  if (size() != 1) throw ValidationError("item() requires a 1x1 tensor");
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (size() != 1) throw ValidationError("backward() requires a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  grad_of(node_.get())[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.empty()) continue;
    check_finite(n->grad, "gradient");
    if (n->backward_fn) n->backward_fn(*n);
  }
}

Parameter make_parameter(std::string name, std::size_t rows, std::size_t cols,
                         std::vector<double> values, bool frozen) {
  return Parameter{std::move(name), Tensor::leaf(rows, cols, std::move(values), !frozen), frozen};
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(m, n, std::move(out), {a.node(), b.node()},
                 [pa, pb, m, k, n](const Node& self) {
                   const auto& g = self.grad;
                   if (pa->requires_grad) {
                     auto ga = grad_of(pa);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* brow = &pb->value[p * n];
                         const double* grow = &g[i * n];
                         for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         ga[i * k + p] += acc;
                       }
                   }
                   if (pb->requires_grad) {
                     auto gb = grad_of(pb);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double x = pa->value[i * k + p];
                         if (x == 0.0) continue;
                         const double* grow = &g[i * n];
                         double* gbrow = &gb[p * n];
                         for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                       }
                   }
                 },
                 "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, std::span<const KeyRange> ranges_in) {
  if (a.cols() != b.cols()) throw ValidationError("matmul_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  validate_ranges(ranges_in, m, n);
  std::vector<KeyRange> ranges(ranges_in.begin(), ranges_in.end());
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = range_for(ranges, i, n);
    const double* arow = &av[i * k];
    for (std::size_t j = r.begin; j < r.end; ++j) {
      const double* brow = &bv[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] = acc;
    }
  }
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(m, n, std::move(out), {a.node(), b.node()},
                 [pa, pb, m, k, n, ranges = std::move(ranges)](const Node& self) {
                   std::span<double> ga, gb;
                   if (pa->requires_grad) ga = grad_of(pa);
                   if (pb->requires_grad) gb = grad_of(pb);
                   for (std::size_t i = 0; i < m; ++i) {
                     const auto r = range_for(ranges, i, n);
                     for (std::size_t j = r.begin; j < r.end; ++j) {
                       const double g = self.grad[i * n + j];
                       if (g == 0.0) continue;
                       if (!ga.empty())
                         for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * pb->value[j * k + p];
                       if (!gb.empty())
                         for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * pa->value[i * k + p];
                     }
                   }
                 },
                 "matmul_nt");
}

// ---------------------------------------------------------------------------
// Element-wise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(a.rows(), a.cols(), std::move(out), {a.node(), b.node()},
                 [pa, pb](const Node& self) {
                   for (Node* p : {pa, pb}) {
                     if (!p->requires_grad) continue;
                     auto g = grad_of(p);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                 },
                 "add");
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(a.rows(), a.cols(), std::move(out), {a.node(), b.node()},
                 [pa, pb](const Node& self) {
                   if (pa->requires_grad) {
                     auto g = grad_of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
                   }
                   if (pb->requires_grad) {
                     auto g = grad_of(pb);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
                   }
                 },
                 "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(a.rows(), a.cols(), std::move(out), {a.node(), b.node()},
                 [pa, pb](const Node& self) {
                   if (pa->requires_grad) {
                     auto g = grad_of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->value[i];
                   }
                   if (pb->requires_grad) {
                     auto g = grad_of(pb);
                     for (std::size_t i = 0; i < g.size(); ++i)
                       g[i] -= self.grad[i] * self.value[i] / pb->value[i];
                   }
                 },
                 "div");
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_row(a, row, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] + row.values()[j];
  Node* pa = a.node().get();
  Node* pr = row.node().get();
  return make_op(m, n, std::move(out), {a.node(), row.node()},
                 [pa, pr, m, n](const Node& self) {
                   if (pa->requires_grad) {
                     auto g = grad_of(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                   if (pr->requires_grad) {
                     auto g = grad_of(pr);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                   }
                 },
                 "add_row");
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require_row(a, row, "mul_row");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] * row.values()[j];
  Node* pa = a.node().get();
  Node* pr = row.node().get();
  return make_op(m, n, std::move(out), {a.node(), row.node()},
                 [pa, pr, m, n](const Node& self) {
                   if (pa->requires_grad) {
                     auto g = grad_of(pa);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j)
                         g[i * n + j] += self.grad[i * n + j] * pr->value[j];
                   }
                   if (pr->requires_grad) {
                     auto g = grad_of(pr);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j)
                         g[j] += self.grad[i * n + j] * pa->value[i * n + j];
                   }
                 },
                 "mul_row");
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      },
      "gelu");
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ValidationError("concat_cols: row counts differ");
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&a.values()[i * na], na, &out[i * n]);
    std::copy_n(&b.values()[i * nb], nb, &out[i * n + na]);
  }
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(m, n, std::move(out), {a.node(), b.node()},
                 [pa, pb, m, na, nb, n](const Node& self) {
                   if (pa->requires_grad) {
                     auto g = grad_of(pa);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < na; ++j) g[i * na + j] += self.grad[i * n + j];
                   }
                   if (pb->requires_grad) {
                     auto g = grad_of(pb);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < nb; ++j)
                         g[i * nb + j] += self.grad[i * n + na + j];
                   }
                 },
                 "concat_cols");
}

Tensor gather(const Tensor& a, std::span<const std::size_t> source_in, std::size_t rows,
              std::size_t cols) {
  if (source_in.size() != rows * cols) throw ValidationError("gather: index count != output size");
  for (auto s : source_in) {
    if (s != kNoSource && s >= a.size()) throw ValidationError("gather: index out of range");
  }
  std::vector<std::size_t> source(source_in.begin(), source_in.end());
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = source[i] == kNoSource ? 0.0 : a.values()[source[i]];
  }
  Node* pa = a.node().get();
  return make_op(rows, cols, std::move(out), {a.node()},
                 [pa, source = std::move(source)](const Node& self) {
                   auto g = grad_of(pa);
                   for (std::size_t i = 0; i < source.size(); ++i) {
                     if (source[i] != kNoSource) g[source[i]] += self.grad[i];
                   }
                 },
                 "gather");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  Node* pa = a.node().get();
  return make_op(1, 1, {s}, {a.node()},
                 [pa](const Node& self) {
                   auto g = grad_of(pa);
                   for (double& x : g) x += self.grad[0];
                 },
                 "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor weighted_sum(const Tensor& a, std::span<const double> weights_in) {
  if (weights_in.size() != a.size()) throw ValidationError("weighted_sum: weight count mismatch");
  std::vector<double> weights(weights_in.begin(), weights_in.end());
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.values()[i];
  Node* pa = a.node().get();
  return make_op(1, 1, {s}, {a.node()},
                 [pa, weights = std::move(weights)](const Node& self) {
                   auto g = grad_of(pa);
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
                 },
                 "weighted_sum");
}

// ---------------------------------------------------------------------------
// Normalisation

Tensor layernorm_rows(const Tensor& a, double eps) {
  if (!(eps > 0.0)) throw ValidationError("layernorm: eps must be positive");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &a.values()[i * n];
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (x[j] - mu) * inv_std[i];
  }
  Node* pa = a.node().get();
  return make_op(m, n, std::move(out), {a.node()},
                 [pa, m, n, inv_std = std::move(inv_std)](const Node& self) {
                   auto g = grad_of(pa);
                   const double inv_n = 1.0 / static_cast<double>(n);
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* dy = &self.grad[i * n];
                     const double* y = &self.value[i * n];
                     double mean_dy = 0.0, mean_dy_y = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       mean_dy += dy[j];
                       mean_dy_y += dy[j] * y[j];
                     }
                     mean_dy *= inv_n;
                     mean_dy_y *= inv_n;
                     for (std::size_t j = 0; j < n; ++j) {
                       g[i * n + j] += inv_std[i] * (dy[j] - mean_dy - y[j] * mean_dy_y);
                     }
                   }
                 },
                 "layernorm");
}

Tensor softmax_rows(const Tensor& a, std::span<const KeyRange> ranges_in) {
  const std::size_t m = a.rows(), n = a.cols();
  validate_ranges(ranges_in, m, n);
  std::vector<KeyRange> ranges(ranges_in.begin(), ranges_in.end());
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = range_for(ranges, i, n);
    const double* x = &a.values()[i * n];
    double mx = x[r.begin];
    for (std::size_t j = r.begin; j < r.end; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = r.begin; j < r.end; ++j) {
      out[i * n + j] = std::exp(x[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = r.begin; j < r.end; ++j) out[i * n + j] /= z;
  }
  Node* pa = a.node().get();
  return make_op(m, n, std::move(out), {a.node()},
                 [pa, m, n, ranges = std::move(ranges)](const Node& self) {
                   auto g = grad_of(pa);
                   for (std::size_t i = 0; i < m; ++i) {
                     const auto r = range_for(ranges, i, n);
                     double dot = 0.0;
                     for (std::size_t j = r.begin; j < r.end; ++j)
                       dot += self.grad[i * n + j] * self.value[i * n + j];
                     for (std::size_t j = r.begin; j < r.end; ++j)
                       g[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
                   }
                 },
                 "softmax");
}

// ---------------------------------------------------------------------------
// Losses

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const auto d = sub(pred, target);
  return mean(mul(d, d));
}

Tensor bce_terms(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce");
  check_binary(target.values(), "bce");
  constexpr double lo = kProbabilityClamp;
  constexpr double hi = 1.0 - kProbabilityClamp;
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = std::clamp(pred.values()[i], lo, hi);
    const double t = target.values()[i];
    out[i] = -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  Node* pp = pred.node().get();
  // The target is data: it is kept alive by the closure but never differentiated.
  return make_op(pred.rows(), pred.cols(), std::move(out), {pred.node()},
                 [pp, pt = target.node()](const Node& self) {
                   auto g = grad_of(pp);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double p = pp->value[i];
                     if (p <= lo || p >= hi) continue;  // clamp is flat here
                     const double t = pt->value[i];
                     g[i] += self.grad[i] * (-t / p + (1.0 - t) / (1.0 - p));
                   }
                 },
                 "bce");
}

Tensor bce(const Tensor& pred, const Tensor& target) { return mean(bce_terms(pred, target)); }

}  // namespace volseg::ad
