#include "volseg/srpp.hpp"

#include <cmath>

#include "volseg/errors.hpp"

namespace volseg::srpp {

RelPosMatrix make_gt_pos(std::size_t slices) {
  if (slices == 0) throw ValidationError("relative positions need at least one slice");
  RelPosMatrix m{slices, std::vector<double>(slices * slices)};
  for (std::size_t i = 0; i < slices; ++i)
    for (std::size_t j = 0; j < slices; ++j)
      m.values[i * slices + j] = static_cast<double>(j) - static_cast<double>(i);
  return m;
}

SrppParams SrppParams::init(std::size_t c, std::uint64_t seed) {
  return {nn::glorot("srpp.token.weight", c, c, seed),
          nn::zeros("srpp.token.bias", 1, c),
          nn::AttentionParams::init("srpp.attention", c, seed),
          nn::glorot("srpp.hidden.weight", 2 * c, c, seed),
          nn::zeros("srpp.hidden.bias", 1, c),
          nn::glorot("srpp.out.weight", c, 1, seed),
          nn::zeros("srpp.out.bias", 1, 1)};
}

std::vector<ad::Parameter*> SrppParams::parameters() {
  std::vector<ad::Parameter*> out{&token_weight, &token_bias};
  attention.collect(out);
  out.insert(out.end(), {&hidden_weight, &hidden_bias, &out_weight, &out_bias});
  return out;
}

ad::Tensor slice_embeddings(const FeatureTensor& z, const SrppParams& p) {
  validate(z);
  const std::size_t d = z.slices, t = z.tokens_per_slice(), n = z.token_count();
  const auto h = ad::gelu(ad::add_row(ad::matmul(z.tokens, p.token_weight.tensor), p.token_bias.tensor));
  std::vector<double> pool(d * n, 0.0);
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t k = 0; k < t; ++k) pool[s * n + s * t + k] = 1.0 / static_cast<double>(t);
  const auto e = ad::matmul(ad::Tensor::constant(d, n, std::move(pool)), h);
  const auto& a = p.attention;
  return ad::add(e, ad::matmul(nn::attend(e, e, a.query, a.key, a.value), a.output.tensor));
}

ad::Tensor predict_relative_positions(const FeatureTensor& z, const SrppParams& p) {
  const std::size_t d = z.slices;
  if (d < 2) throw ValidationError("relative position prediction needs at least 2 slices");
  const auto e = slice_embeddings(z, p);
  const std::size_t c = e.cols();

  // One row per ordered pair (i, j), i != j, i-major.
  const std::size_t pairs = d * (d - 1);
  std::vector<std::size_t> left, right;
  left.reserve(pairs * c);
  right.reserve(pairs * c);
  std::vector<std::size_t> pair_of(d * d, ad::kNoSource);
  std::size_t row = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      for (std::size_t k = 0; k < c; ++k) {
        left.push_back(i * c + k);
        right.push_back(j * c + k);
      }
      pair_of[i * d + j] = row++;
    }
  const auto x = ad::concat_cols(ad::gather(e, left, pairs, c), ad::gather(e, right, pairs, c));
  const auto hidden = ad::gelu(ad::add_row(ad::matmul(x, p.hidden_weight.tensor), p.hidden_bias.tensor));
  const auto offsets = ad::add_row(ad::matmul(hidden, p.out_weight.tensor), p.out_bias.tensor);
  return ad::gather(offsets, pair_of, d, d);
}

RelPosMatrix to_matrix(const ad::Tensor& pred) {
  if (pred.rows() != pred.cols()) throw ValidationError("relative position matrix must be square");
  return {pred.rows(), std::vector<double>(pred.values().begin(), pred.values().end())};
}

namespace {

std::vector<double> offdiag_mask(std::size_t d) {
  std::vector<double> w(d * d, 1.0);
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 0.0;
  return w;
}

void check_pair(std::size_t pred_rows, std::size_t pred_cols, const RelPosMatrix& gt) {
  if (pred_rows != gt.size || pred_cols != gt.size) {
    throw ValidationError("relative position shapes differ");
  }
  if (gt.size < 2) throw ValidationError("relative position loss needs at least 2 slices");
}

}  // namespace

ad::Tensor srpp_loss(const ad::Tensor& pred, const RelPosMatrix& gt) {
  check_pair(pred.rows(), pred.cols(), gt);
  const auto diff = ad::sub(pred, ad::Tensor::constant(gt.size, gt.size, gt.values));
  // Sum first, then divide, so integer-valued sums give exact results.
  const auto total = ad::weighted_sum(ad::mul(diff, diff), offdiag_mask(gt.size));
  return ad::div(total, ad::Tensor::scalar(static_cast<double>(gt.size * (gt.size - 1))));
}

double srpp_loss(const RelPosMatrix& pred, const RelPosMatrix& gt) {
  check_pair(pred.size, pred.size, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < gt.size; ++i)
    for (std::size_t j = 0; j < gt.size; ++j)
      if (i != j) s += (pred.at(i, j) - gt.at(i, j)) * (pred.at(i, j) - gt.at(i, j));
  return s / static_cast<double>(gt.size * (gt.size - 1));
}

double mean_abs_offdiag_error(const RelPosMatrix& pred, const RelPosMatrix& gt) {
  check_pair(pred.size, pred.size, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < gt.size; ++i)
    for (std::size_t j = 0; j < gt.size; ++j)
      if (i != j) s += std::abs(pred.at(i, j) - gt.at(i, j));
  return s / static_cast<double>(gt.size * (gt.size - 1));
}

}  // namespace volseg::srpp
