#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "volseg/autodiff.hpp"

namespace volseg::nn {

/// Normal(0, 2 / (rows + cols)) weights from a stream keyed by (seed, name),
/// so a parameter's initial value does not depend on which other parameters
/// exist.
ad::Parameter glorot(std::string name, std::size_t rows, std::size_t cols, std::uint64_t seed);
ad::Parameter zeros(std::string name, std::size_t rows, std::size_t cols);
ad::Parameter ones(std::string name, std::size_t rows, std::size_t cols);

/// Token of slice i may read the tokens of slices 0..i.
std::vector<ad::KeyRange> causal_slice_ranges(std::size_t slices, std::size_t tokens_per_slice);
/// Token of slice i may read the tokens of slice i only.
std::vector<ad::KeyRange> same_slice_ranges(std::size_t slices, std::size_t tokens_per_slice);

struct AttentionParams {
  ad::Parameter query;
  ad::Parameter key;
  ad::Parameter value;
  ad::Parameter output;

  static AttentionParams init(const std::string& prefix, std::size_t channels, std::uint64_t seed);
  void collect(std::vector<ad::Parameter*>& out);
};

/// softmax((from_q Wq)(from_kv Wk)^T / sqrt(d)) (from_kv Wv), with d the
/// projected width. Rows may be restricted to key ranges.
ad::Tensor attend(const ad::Tensor& from_q, const ad::Tensor& from_kv, const ad::Parameter& wq,
                  const ad::Parameter& wk, const ad::Parameter& wv,
                  std::span<const ad::KeyRange> ranges = {});

/// Attention weights only (for inspection and tests).
ad::Tensor attention_weights(const ad::Tensor& from_q, const ad::Tensor& from_kv,
                             const ad::Parameter& wq, const ad::Parameter& wk,
                             std::span<const ad::KeyRange> ranges = {});

/// x + attend(x, x, causal over slices) Wo. Slice 0 reads only itself.
ad::Tensor causal_memory_attention(const ad::Tensor& x, const AttentionParams& params,
                                   std::size_t slices, std::size_t tokens_per_slice);

/// Token geometry needed to map per-token outputs back onto the voxel grid.
struct TokenGrid {
  std::size_t slices = 0;
  std::size_t height = 0;  // tokens per column
  std::size_t width = 0;   // tokens per row
  std::size_t patch = 1;

  std::size_t voxels_per_class() const { return slices * height * patch * width * patch; }
};

/// Per-token linear map to K logits, sigmoid, then nearest (block)
/// replication of each token over its patch x patch pixels. Returns K rows of
/// D*H*W probabilities.
ad::Tensor token_head(const ad::Tensor& tokens, const ad::Parameter& weight,
                      const ad::Parameter& bias, const TokenGrid& grid);

}  // namespace volseg::nn
