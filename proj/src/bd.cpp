#include "volseg/bd.hpp"

#include "volseg/errors.hpp"

namespace volseg::bd {

BoundaryFeatures with_tokens(const FeatureTensor& like, ad::Tensor tokens) {
  BoundaryFeatures out;
  out.channels = like.channels;
  out.slices = like.slices;
  out.height = like.height;
  out.width = like.width;
  out.tokens = std::move(tokens);
  validate(out);
  return out;
}

BdParams BdParams::init(std::size_t c, std::size_t k, std::uint64_t seed) {
  return {nn::glorot("bd.init.weight", c, c, seed),
          nn::AttentionParams::init("bd.memory", c, seed),
          nn::glorot("bd.cross.query", c, c, seed),
          nn::glorot("bd.cross.key", c, c, seed),
          nn::glorot("bd.cross.value", c, c, seed),
          nn::ones("bd.norm.scale", 1, c),
          nn::zeros("bd.norm.shift", 1, c),
          nn::glorot("bd.mlp.in.weight", c, 2 * c, seed),
          nn::zeros("bd.mlp.in.bias", 1, 2 * c),
          nn::glorot("bd.mlp.out.weight", 2 * c, c, seed),
          nn::zeros("bd.mlp.out.bias", 1, c),
          nn::glorot("bd.head.weight", c, k, seed),
          nn::zeros("bd.head.bias", 1, k)};
}

std::vector<ad::Parameter*> BdParams::parameters() {
  std::vector<ad::Parameter*> out{&init_weight};
  memory.collect(out);
  out.insert(out.end(), {&cross_query, &cross_key, &cross_value, &norm_scale, &norm_shift,
                         &mlp_in_weight, &mlp_in_bias, &mlp_out_weight, &mlp_out_bias,
                         &head_weight, &head_bias});
  return out;
}

BoundaryFeatures memory_attend_boundary(const FeatureTensor& z, const BdParams& p) {
  validate(z);
  const auto initial = ad::matmul(z.tokens, p.init_weight.tensor);
  return with_tokens(z, nn::causal_memory_attention(initial, p.memory, z.slices,
                                                    z.tokens_per_slice()));
}

BoundaryFeatures cross_attend(const BoundaryFeatures& z_bd, const FeatureTensor& z,
                              const BdParams& p) {
  validate(z_bd);
  validate(z);
  if (z_bd.slices != z.slices || z_bd.height != z.height || z_bd.width != z.width ||
      z_bd.channels != z.channels) {
    throw ValidationError("cross attention: boundary and slice features differ in shape");
  }
  const auto ranges = nn::same_slice_ranges(z.slices, z.tokens_per_slice());
  return with_tokens(z, nn::attend(z_bd.tokens, z.tokens, p.cross_query, p.cross_key,
                                   p.cross_value, ranges));
}

BoundaryFeatures refine_boundary_features(const BoundaryFeatures& refined, const BdParams& p) {
  validate(refined);
  const auto& x = refined.tokens;
  const auto normed = ad::add_row(ad::mul_row(ad::layernorm_rows(x, kLayerNormEps),
                                              p.norm_scale.tensor),
                                  p.norm_shift.tensor);
  const auto hidden =
      ad::gelu(ad::add_row(ad::matmul(normed, p.mlp_in_weight.tensor), p.mlp_in_bias.tensor));
  const auto mlp = ad::add_row(ad::matmul(hidden, p.mlp_out_weight.tensor), p.mlp_out_bias.tensor);
  return with_tokens(refined, ad::add(mlp, x));
}

ad::Tensor boundary_head(const BoundaryFeatures& z_out, const BdParams& p, std::size_t patch) {
  validate(z_out);
  return nn::token_head(z_out.tokens, p.head_weight, p.head_bias,
                        {z_out.slices, z_out.height, z_out.width, patch});
}

ad::Tensor mask_tensor(const LabelMask& mask) {
  std::vector<double> v(mask.bits().begin(), mask.bits().end());
  return ad::Tensor::constant(mask.classes(), mask.shape().voxels(), std::move(v));
}

std::vector<double> boundary_weights(const BoundaryMask& gt, std::vector<std::size_t>* degenerate) {
  const std::size_t n = gt.shape().voxels();
  std::vector<double> w(gt.classes() * n);
  for (std::size_t k = 0; k < gt.classes(); ++k) {
    const std::size_t n_bd = gt.count(k);
    const std::size_t n_non = n - n_bd;
    if ((n_bd == 0 || n_non == 0) && degenerate) degenerate->push_back(k);
    const double w_bd = static_cast<double>(n_non) / static_cast<double>(n);
    const double w_non = static_cast<double>(n_bd) / static_cast<double>(n);
    auto bits = gt.class_bits(k);
    for (std::size_t j = 0; j < n; ++j) w[k * n + j] = bits[j] ? w_bd : w_non;
  }
  return w;
}

BoundaryLoss boundary_loss(const ad::Tensor& p_bd, const BoundaryMask& gt) {
  if (p_bd.rows() != gt.classes() || p_bd.cols() != gt.shape().voxels()) {
    throw ValidationError("boundary loss: prediction and boundary mask shapes differ");
  }
  BoundaryLoss out;
  const auto weights = boundary_weights(gt, &out.degenerate_classes);
  out.value = ad::weighted_sum(ad::bce_terms(p_bd, mask_tensor(gt)), weights);
  return out;
}

}  // namespace volseg::bd
