#pragma once

#include <cstdint>

#include "volseg/autodiff.hpp"
#include "volseg/volume.hpp"

namespace volseg {

/// Per-slice features, C x D x H' x W'. Stored token-major: row
/// (d * H' + y) * W' + x holds the C channels of one patch token.
struct FeatureTensor {
  std::size_t channels = 0;
  std::size_t slices = 0;
  std::size_t height = 0;  // H' = H / patch
  std::size_t width = 0;   // W' = W / patch
  ad::Tensor tokens;

  std::size_t tokens_per_slice() const { return height * width; }
  std::size_t token_count() const { return slices * height * width; }
  double at(std::size_t c, std::size_t d, std::size_t y, std::size_t x) const {
    return tokens.at((d * height + y) * width + x, c);
  }
};

/// Throws ValidationError unless the tensor rows/cols agree with the metadata.
void validate(const FeatureTensor& z);

struct EncoderConfig {
  std::size_t patch = 4;
  std::size_t channels = 16;
  std::uint64_t seed = 0;
};

/// Frozen slice encoder: every patch x patch tile of a slice (replicated to
/// three input channels) is mapped by one fixed random linear projection with
/// no bias, then a fixed 2D sinusoidal signal for the tile location is added.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg = {});

  const EncoderConfig& config() const { return cfg_; }
  const ad::Parameter& projection() const { return projection_; }

  FeatureTensor encode(const Volume& volume) const;

  /// Positional signal of tile (y, x) in channel c.
  double positional(std::size_t c, std::size_t y, std::size_t x) const;

  /// FNV-1a over the projection bytes; used to verify the encoder stays frozen.
  std::uint64_t hash() const;

 private:
  EncoderConfig cfg_;
  ad::Parameter projection_;  // (3 * patch^2) x C, frozen
};

}  // namespace volseg
