#include "volseg/augment.hpp"

#include <algorithm>
#include <random>

#include "volseg/errors.hpp"
#include "volseg/rng.hpp"

namespace volseg {

namespace {

template <class T>
void flip_rows(std::span<T> data, std::size_t width) {
  for (std::size_t base = 0; base < data.size(); base += width) {
    std::reverse(data.begin() + static_cast<std::ptrdiff_t>(base),
                 data.begin() + static_cast<std::ptrdiff_t>(base + width));
  }
}

}  // namespace

Volume flip_width(const Volume& v) {
  Volume out = v;
  flip_rows(out.voxels(), v.shape().width);
  return out;
}

LabelMask flip_width(const LabelMask& m) {
  std::vector<std::uint8_t> bits(m.bits().begin(), m.bits().end());
  flip_rows(std::span<std::uint8_t>(bits), m.shape().width);
  return LabelMask(m.classes(), m.shape(), std::move(bits), m.spacing());
}

BoundaryMask flip_width(const BoundaryMask& m) {
  std::vector<std::uint8_t> bits(m.bits().begin(), m.bits().end());
  flip_rows(std::span<std::uint8_t>(bits), m.shape().width);
  return BoundaryMask(m.classes(), m.shape(), std::move(bits), m.spacing());
}

Sample augment(const Sample& in, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!(cfg.flip_probability >= 0.0 && cfg.flip_probability <= 1.0)) {
    throw ValidationError("flip probability must lie in [0, 1]");
  }
  if (!(cfg.noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  if (in.volume.shape() != in.label.shape() || in.label.shape() != in.boundary.shape()) {
    throw ValidationError("augment: volume, label and boundary differ in shape");
  }
  auto rng = make_rng(seed, "augment");
  std::bernoulli_distribution flip(cfg.flip_probability);
  Sample out = flip(rng) ? Sample{flip_width(in.volume), flip_width(in.label),
                                  flip_width(in.boundary)}
                         : in;
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (float& v : out.volume.voxels()) {
      v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(rng), 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace volseg
