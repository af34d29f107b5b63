#include "volseg/nn.hpp"

#include <cmath>
#include <random>

#include "volseg/errors.hpp"
#include "volseg/rng.hpp"

namespace volseg::nn {

ad::Parameter glorot(std::string name, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  auto rng = make_rng(seed, name);
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
  std::vector<double> w(rows * cols);
  for (double& v : w) v = gauss(rng);
  return ad::make_parameter(std::move(name), rows, cols, std::move(w));
}

ad::Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return ad::make_parameter(std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0));
}

ad::Parameter ones(std::string name, std::size_t rows, std::size_t cols) {
  return ad::make_parameter(std::move(name), rows, cols, std::vector<double>(rows * cols, 1.0));
}

std::vector<ad::KeyRange> causal_slice_ranges(std::size_t slices, std::size_t tokens_per_slice) {
  std::vector<ad::KeyRange> r(slices * tokens_per_slice);
  for (std::size_t d = 0; d < slices; ++d)
    for (std::size_t t = 0; t < tokens_per_slice; ++t)
      r[d * tokens_per_slice + t] = {0, (d + 1) * tokens_per_slice};
  return r;
}

std::vector<ad::KeyRange> same_slice_ranges(std::size_t slices, std::size_t tokens_per_slice) {
  std::vector<ad::KeyRange> r(slices * tokens_per_slice);
  for (std::size_t d = 0; d < slices; ++d)
    for (std::size_t t = 0; t < tokens_per_slice; ++t)
      r[d * tokens_per_slice + t] = {d * tokens_per_slice, (d + 1) * tokens_per_slice};
  return r;
}

AttentionParams AttentionParams::init(const std::string& prefix, std::size_t c,
                                      std::uint64_t seed) {
  return {glorot(prefix + ".query", c, c, seed), glorot(prefix + ".key", c, c, seed),
          glorot(prefix + ".value", c, c, seed), glorot(prefix + ".output", c, c, seed)};
}

void AttentionParams::collect(std::vector<ad::Parameter*>& out) {
  out.insert(out.end(), {&query, &key, &value, &output});
}

ad::Tensor attention_weights(const ad::Tensor& from_q, const ad::Tensor& from_kv,
                             const ad::Parameter& wq, const ad::Parameter& wk,
                             std::span<const ad::KeyRange> ranges) {
  const auto q = ad::matmul(from_q, wq.tensor);
  const auto k = ad::matmul(from_kv, wk.tensor);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  return ad::softmax_rows(ad::scale(ad::matmul_nt(q, k, ranges), inv_sqrt_d), ranges);
}

ad::Tensor attend(const ad::Tensor& from_q, const ad::Tensor& from_kv, const ad::Parameter& wq,
                  const ad::Parameter& wk, const ad::Parameter& wv,
                  std::span<const ad::KeyRange> ranges) {
  const auto weights = attention_weights(from_q, from_kv, wq, wk, ranges);
  return ad::matmul(weights, ad::matmul(from_kv, wv.tensor));
}

ad::Tensor causal_memory_attention(const ad::Tensor& x, const AttentionParams& p,
                                   std::size_t slices, std::size_t tokens_per_slice) {
  if (slices == 0 || x.rows() != slices * tokens_per_slice) {
    throw ValidationError("memory attention: token count does not match slices x tokens");
  }
  const auto ranges = causal_slice_ranges(slices, tokens_per_slice);
  const auto mixed = attend(x, x, p.query, p.key, p.value, ranges);
  return ad::add(x, ad::matmul(mixed, p.output.tensor));
}

ad::Tensor token_head(const ad::Tensor& tokens, const ad::Parameter& weight,
                      const ad::Parameter& bias, const TokenGrid& g) {
  if (tokens.rows() != g.slices * g.height * g.width) {
    throw ValidationError("token head: token count does not match the grid");
  }
  const std::size_t k = weight.tensor.cols();
  const auto probs = ad::sigmoid(ad::add_row(ad::matmul(tokens, weight.tensor), bias.tensor));
  const std::size_t hh = g.height * g.patch, ww = g.width * g.patch;
  const std::size_t per_class = g.voxels_per_class();
  std::vector<std::size_t> source(k * per_class);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < g.slices; ++d)
      for (std::size_t y = 0; y < hh; ++y)
        for (std::size_t x = 0; x < ww; ++x) {
          const std::size_t token = (d * g.height + y / g.patch) * g.width + x / g.patch;
          source[c * per_class + (d * hh + y) * ww + x] = token * k + c;
        }
  return ad::gather(probs, source, k, per_class);
}

}  // namespace volseg::nn
