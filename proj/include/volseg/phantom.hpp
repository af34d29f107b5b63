#pragma once

#include <cstdint>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

/// Elliptic cross-section whose centre and radii move linearly with slice
/// index. Stacking the cross-sections gives a sheared ellipsoidal cylinder.
struct Blob {
  std::size_t class_index = 0;
  double center_y = 0.0;  // at slice 0
  double center_x = 0.0;
  double radius_y = 1.0;
  double radius_x = 1.0;
  double drift_y = 0.0;  // centre shift per slice
  double drift_x = 0.0;
  double growth = 0.0;  // radius change per slice (both axes)

  double cy(std::size_t d) const { return center_y + drift_y * static_cast<double>(d); }
  double cx(std::size_t d) const { return center_x + drift_x * static_cast<double>(d); }
  double ry(std::size_t d) const { return radius_y + growth * static_cast<double>(d); }
  double rx(std::size_t d) const { return radius_x + growth * static_cast<double>(d); }
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  GridShape shape{6, 32, 32};
  std::size_t classes = 1;
  std::vector<Blob> blobs;
  double noise = 0.0;  // Gaussian sigma, in [0, 1]
};

struct Phantom {
  Volume volume;
  LabelMask label;
};

inline constexpr float kForegroundIntensity = 0.8f;
inline constexpr float kBackgroundIntensity = 0.2f;

/// Throws ValidationError if a blob leaves the grid on any slice or the
/// parameters are out of range.
void validate(const PhantomSpec& spec);

/// Deterministic in spec.seed. Label k is the union of the blobs of class k;
/// intensity is 0.8 on any foreground, 0.2 elsewhere, plus seeded noise,
/// clamped to [0, 1].
Phantom generate_phantom(const PhantomSpec& spec);

/// Parameters for sampling a population of phantoms.
struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t cases = 25;
  GridShape shape{6, 32, 32};
  std::size_t classes = 1;
  double radius_y = 7.0;
  double radius_x = 8.0;
  double radius_jitter = 1.0;
  double drift_y = 0.0;
  double drift_x = 1.0;
  double growth = 0.0;
  double center_jitter = 3.0;
  double noise = 0.05;
};

/// One PhantomSpec per case. Centres are jittered uniformly, restricted to
/// the range that keeps every slice of the blob inside the grid.
std::vector<PhantomSpec> sample_phantom_specs(const DatasetSpec& spec);

}  // namespace volseg
