#pragma once

// Slice relative position prediction: a self-supervised head that regresses
// the signed offset j - i between every ordered pair of slices from the
// frozen features alone. It never sees labels.

#include <cstdint>
#include <vector>

#include "volseg/nn.hpp"
#include "volseg/encoder.hpp"

namespace volseg::srpp {

/// D x D offsets, row-major. Diagonal is 0.
struct RelPosMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

/// Entry (i, j) = j - i.
RelPosMatrix make_gt_pos(std::size_t slices);

struct SrppParams {
  // Per-token projection + GELU applied before spatial pooling.
  ad::Parameter token_weight;  // C x C
  ad::Parameter token_bias;    // 1 x C
  // Bidirectional self-attention over the D slice embeddings.
  nn::AttentionParams attention;
  // Pair predictor 2C -> C -> 1.
  ad::Parameter hidden_weight;  // 2C x C
  ad::Parameter hidden_bias;    // 1 x C
  ad::Parameter out_weight;     // C x 1
  ad::Parameter out_bias;       // 1 x 1

  static SrppParams init(std::size_t channels, std::uint64_t seed);
  std::vector<ad::Parameter*> parameters();
};

/// Pooled, attended slice embeddings e', D x C.
ad::Tensor slice_embeddings(const FeatureTensor& z, const SrppParams& params);

/// Predicted offsets P_pos as a D x D tensor with a zero diagonal. Needs D >= 2.
ad::Tensor predict_relative_positions(const FeatureTensor& z, const SrppParams& params);

RelPosMatrix to_matrix(const ad::Tensor& pred);

/// Sum of squared errors over ordered pairs i != j, divided by D(D - 1).
ad::Tensor srpp_loss(const ad::Tensor& pred, const RelPosMatrix& gt);
double srpp_loss(const RelPosMatrix& pred, const RelPosMatrix& gt);

/// Mean |pred - gt| over off-diagonal entries.
double mean_abs_offdiag_error(const RelPosMatrix& pred, const RelPosMatrix& gt);

}  // namespace volseg::srpp
