#pragma once

// Minimal reverse-mode tensor engine. Every tensor is a row-major matrix
// (scalars are 1x1). The graph is rebuilt on every forward pass; a Tensor is a
// shared handle to a graph node, so copies alias the same storage.

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace volseg::ad {

struct Node;

/// Half-open column range [begin, end) a row is allowed to read.
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tensor {
 public:
  Tensor() = default;

  /// Data that never receives gradient.
  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor scalar(double v) { return constant(1, 1, {v}); }
  /// Graph leaf; gradient accumulates into it when requires_grad is set.
  static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  bool requires_grad() const;

  std::span<const double> values() const;
  /// Direct write access, intended for leaves (optimizer, finite differences).
  std::span<double> mutable_values();
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  /// Empty until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates. Requires a 1x1 tensor.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;
};

/// A named trainable (or frozen) leaf. Frozen parameters are leaves without
/// requires_grad: gradient flows through them to upstream inputs but is never
/// stored into them.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

Parameter make_parameter(std::string name, std::size_t rows, std::size_t cols,
                         std::vector<double> values, bool frozen = false);

inline constexpr std::size_t kNoSource = std::numeric_limits<std::size_t>::max();

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T. With ranges, row i only computes columns in ranges[i]; the rest
/// are zero and carry no gradient.
Tensor matmul_nt(const Tensor& a, const Tensor& b, std::span<const KeyRange> ranges = {});

// Element-wise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a + row, with row (1 x cols) repeated over every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a * row, element-wise, row repeated.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Shape manipulation.
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// out.flat[i] = a.flat[source[i]], or 0 when source[i] == kNoSource.
/// Backward scatter-adds.
Tensor gather(const Tensor& a, std::span<const std::size_t> source, std::size_t rows,
              std::size_t cols);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// sum_i weights[i] * a.flat[i], weights constant.
Tensor weighted_sum(const Tensor& a, std::span<const double> weights);

// Normalisation.
/// Per-row (x - mean) / sqrt(var + eps), biased variance. Throws on eps <= 0.
Tensor layernorm_rows(const Tensor& a, double eps);
/// Row-wise softmax. With ranges, entries outside ranges[i] get probability 0.
Tensor softmax_rows(const Tensor& a, std::span<const KeyRange> ranges = {});

// Losses.
inline constexpr double kProbabilityClamp = 1e-7;
/// mean((pred - target)^2).
Tensor mse(const Tensor& pred, const Tensor& target);
/// Per-element -(t ln p + (1 - t) ln(1 - p)) with p clamped to
/// [1e-7, 1 - 1e-7]. Target must be binary.
Tensor bce_terms(const Tensor& pred, const Tensor& target);
/// mean of bce_terms.
Tensor bce(const Tensor& pred, const Tensor& target);

}  // namespace volseg::ad
