#include "volseg/seg.hpp"

#include <cmath>

#include "volseg/errors.hpp"

namespace volseg::seg {

SegParams SegParams::init(std::size_t c, std::size_t k, std::uint64_t seed) {
  return {nn::AttentionParams::init("seg.memory", c, seed), nn::glorot("seg.head.weight", c, k, seed),
          nn::zeros("seg.head.bias", 1, k), nn::zeros("seg.fusion.weight", c, c)};
}

std::vector<ad::Parameter*> SegParams::parameters() {
  std::vector<ad::Parameter*> out;
  memory.collect(out);
  out.insert(out.end(), {&head_weight, &head_bias});
  return out;
}

std::vector<ad::Parameter*> SegParams::fusion_parameters() { return {&fusion_weight}; }

FeatureTensor fuse_boundary_features(const FeatureTensor& z,
                                     const std::optional<bd::BoundaryFeatures>& z_bd_out,
                                     const SegParams& p) {
  validate(z);
  if (!z_bd_out) return z;
  validate(*z_bd_out);
  if (z_bd_out->tokens.rows() != z.tokens.rows() || z_bd_out->channels != z.channels) {
    throw ValidationError("fusion: boundary and slice features differ in shape");
  }
  FeatureTensor out = z;
  out.tokens = ad::add(z.tokens, ad::matmul(z_bd_out->tokens, p.fusion_weight.tensor));
  return out;
}

ad::Tensor segment(const FeatureTensor& z, const SegParams& p, std::size_t patch) {
  validate(z);
  const auto attended =
      nn::causal_memory_attention(z.tokens, p.memory, z.slices, z.tokens_per_slice());
  return nn::token_head(attended, p.head_weight, p.head_bias, {z.slices, z.height, z.width, patch});
}

ad::Tensor seg_loss(const ad::Tensor& p_seg, const LabelMask& gt) {
  if (p_seg.rows() != gt.classes() || p_seg.cols() != gt.shape().voxels()) {
    throw ValidationError("segmentation loss: prediction and label shapes differ");
  }
  return ad::bce(p_seg, bd::mask_tensor(gt));
}

ad::Tensor soft_dice_loss(const ad::Tensor& p_seg, const LabelMask& gt) {
  if (p_seg.rows() != gt.classes() || p_seg.cols() != gt.shape().voxels()) {
    throw ValidationError("dice loss: prediction and label shapes differ");
  }
  const std::size_t n = gt.shape().voxels();
  const std::size_t k = gt.classes();
  ad::Tensor acc = ad::Tensor::scalar(0.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> in_class(k * n, 0.0), overlap(k * n, 0.0);
    auto bits = gt.class_bits(c);
    for (std::size_t j = 0; j < n; ++j) {
      in_class[c * n + j] = 1.0;
      overlap[c * n + j] = bits[j];
    }
    const double g = static_cast<double>(gt.count(c));
    const auto inter = ad::weighted_sum(p_seg, overlap);
    const auto psum = ad::weighted_sum(p_seg, in_class);
    const auto dice = ad::div(ad::add_scalar(ad::scale(inter, 2.0), 1.0), ad::add_scalar(psum, g + 1.0));
    acc = ad::add(acc, dice);
  }
  return ad::add_scalar(ad::scale(acc, -1.0 / static_cast<double>(k)), 1.0);
}

void validate(const LossWeights& w) {
  if (!std::isfinite(w.srpp) || !std::isfinite(w.bd) || w.srpp < 0.0 || w.bd < 0.0) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
}

ad::Tensor total_loss(const ad::Tensor& l_seg, const ad::Tensor& l_srpp, const ad::Tensor& l_bd,
                      const LossWeights& w) {
  validate(w);
  return ad::add(ad::add(l_seg, ad::scale(l_srpp, w.srpp)), ad::scale(l_bd, w.bd));
}

LabelMask binarize(const ad::Tensor& probs, const GridShape& shape, const Spacing& spacing) {
  if (probs.cols() != shape.voxels()) throw ValidationError("binarize: shape mismatch");
  std::vector<std::uint8_t> bits(probs.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = probs.values()[i] > kBinarizeThreshold;
  return LabelMask(probs.rows(), shape, std::move(bits), spacing);
}

}  // namespace volseg::seg
