#pragma once

#include <cstdint>

#include "volseg/volume.hpp"

namespace volseg {

struct AugmentConfig {
  double flip_probability = 0.5;
  double noise_sigma = 0.02;
};

/// A training example: intensities, labels, and the boundary derived from the
/// labels of the full volume.
struct Sample {
  Volume volume;
  LabelMask label;
  BoundaryMask boundary;
};

/// Mirror along the width axis, every slice alike.
Volume flip_width(const Volume& v);
LabelMask flip_width(const LabelMask& m);
BoundaryMask flip_width(const BoundaryMask& m);

/// Seeded horizontal flip applied to all three grids together, then Gaussian
/// noise on the intensities only, clamped to [0, 1].
Sample augment(const Sample& in, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace volseg
