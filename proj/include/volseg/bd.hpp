#pragma once

// Boundary detection branch: causal slice-memory attention over a learned
// boundary embedding of Z, per-slice cross-attention against Z, a residual
// LayerNorm/MLP refinement, and a per-token boundary head trained with a
// class-balanced cross-entropy.

#include <cstdint>
#include <vector>

#include "volseg/encoder.hpp"
#include "volseg/nn.hpp"
#include "volseg/volume.hpp"

namespace volseg::bd {

/// Same layout as FeatureTensor; kept as a distinct type so boundary features
/// and slice features cannot be swapped by accident.
struct BoundaryFeatures : FeatureTensor {};

BoundaryFeatures with_tokens(const FeatureTensor& like, ad::Tensor tokens);

inline constexpr double kLayerNormEps = 1e-5;

struct BdParams {
  ad::Parameter init_weight;  // C x C, Z -> initial boundary features
  nn::AttentionParams memory;
  ad::Parameter cross_query;  // C x C, d_K = C
  ad::Parameter cross_key;
  ad::Parameter cross_value;
  ad::Parameter norm_scale;  // 1 x C
  ad::Parameter norm_shift;  // 1 x C
  ad::Parameter mlp_in_weight;   // C x 2C
  ad::Parameter mlp_in_bias;     // 1 x 2C
  ad::Parameter mlp_out_weight;  // 2C x C
  ad::Parameter mlp_out_bias;    // 1 x C
  ad::Parameter head_weight;     // C x K
  ad::Parameter head_bias;       // 1 x K

  static BdParams init(std::size_t channels, std::size_t classes, std::uint64_t seed);
  std::vector<ad::Parameter*> parameters();
};

/// Z_bd: the learned map of Z, enriched by causal attention over the tokens
/// of slices 0..i (full attention within the slice, none to later slices).
BoundaryFeatures memory_attend_boundary(const FeatureTensor& z, const BdParams& params);

/// Z'_bd per slice: softmax(Q_bd K^T / sqrt(d_K)) V with queries from Z_bd
/// and keys/values from the same slice of Z.
BoundaryFeatures cross_attend(const BoundaryFeatures& z_bd, const FeatureTensor& z,
                              const BdParams& params);

/// Z_out = MLP(LayerNorm(Z')) + Z', per token.
BoundaryFeatures refine_boundary_features(const BoundaryFeatures& refined, const BdParams& params);

/// Boundary probabilities, K rows of D*H*W.
ad::Tensor boundary_head(const BoundaryFeatures& z_out, const BdParams& params, std::size_t patch);

struct BoundaryLoss {
  ad::Tensor value;
  /// Classes whose slab had no boundary or no non-boundary voxels; their
  /// contribution is exactly 0.
  std::vector<std::size_t> degenerate_classes;
};

/// Per class k, with N = N_bd + N_nonbd counted over this class and slab:
///   (N_nonbd / N) * sum_{boundary} BCE_j + (N_bd / N) * sum_{non-boundary} BCE_j
/// summed over classes. BCE uses natural log and the 1e-7 clamp.
BoundaryLoss boundary_loss(const ad::Tensor& p_bd, const BoundaryMask& gt_bd);

/// Class-balancing weights of boundary_loss, one per voxel.
std::vector<double> boundary_weights(const BoundaryMask& gt_bd,
                                     std::vector<std::size_t>* degenerate = nullptr);

/// K x (D*H*W) constant tensor of a mask's bits.
ad::Tensor mask_tensor(const LabelMask& mask);

}  // namespace volseg::bd
