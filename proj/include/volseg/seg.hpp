#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "volseg/bd.hpp"
#include "volseg/encoder.hpp"
#include "volseg/nn.hpp"
#include "volseg/volume.hpp"

namespace volseg::seg {

struct SegParams {
  nn::AttentionParams memory;
  ad::Parameter head_weight;    // C x K
  ad::Parameter head_bias;      // 1 x K
  ad::Parameter fusion_weight;  // C x C, applied to the refined boundary features

  static SegParams init(std::size_t channels, std::size_t classes, std::uint64_t seed);
  /// Memory attention and head only.
  std::vector<ad::Parameter*> parameters();
  std::vector<ad::Parameter*> fusion_parameters();
};

/// z + Z_out Wf. With no boundary features (fusion disabled), z is returned
/// as-is.
FeatureTensor fuse_boundary_features(const FeatureTensor& z,
                                     const std::optional<bd::BoundaryFeatures>& z_bd_out,
                                     const SegParams& params);

/// Causal memory attention, per-token head, sigmoid, block replication.
/// K rows of D*H*W probabilities.
ad::Tensor segment(const FeatureTensor& z_fused, const SegParams& params, std::size_t patch);

/// Mean per-voxel BCE over all K*D*H*W entries.
ad::Tensor seg_loss(const ad::Tensor& p_seg, const LabelMask& gt);

/// 1 - mean_k (2 sum(p g) + 1) / (sum p + sum g + 1); optional alternative to BCE.
ad::Tensor soft_dice_loss(const ad::Tensor& p_seg, const LabelMask& gt);

struct LossWeights {
  double srpp = 0.01;
  double bd = 0.1;
};

void validate(const LossWeights& w);

/// l_seg + lambda_srpp * l_srpp + lambda_bd * l_bd.
ad::Tensor total_loss(const ad::Tensor& l_seg, const ad::Tensor& l_srpp, const ad::Tensor& l_bd,
                      const LossWeights& w);

inline constexpr double kBinarizeThreshold = 0.5;

/// Voxels with probability strictly above 0.5 become foreground.
LabelMask binarize(const ad::Tensor& probabilities, const GridShape& shape,
                   const Spacing& spacing = {1.f, 1.f, 1.f});

}  // namespace volseg::seg
