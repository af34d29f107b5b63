#include "volseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "volseg/errors.hpp"
#include "volseg/rng.hpp"

namespace volseg {

namespace {

// Allowed range for a slice-0 centre coordinate so that c + drift*d +/- r(d)
// stays within [0, extent - 1] on every slice.
std::pair<double, double> centre_range(double radius, double drift, double growth,
                                       std::size_t depth, std::size_t extent) {
  double lo = -1e300;
  double hi = 1e300;
  for (std::size_t d = 0; d < depth; ++d) {
    const double r = radius + growth * static_cast<double>(d);
    const double shift = drift * static_cast<double>(d);
    lo = std::max(lo, r - shift);
    hi = std::min(hi, static_cast<double>(extent - 1) - r - shift);
  }
  return {lo, hi};
}

}  // namespace

void validate(const PhantomSpec& spec) {
  if (spec.shape.voxels() == 0) throw ValidationError("phantom grid must be non-empty");
  if (spec.classes == 0) throw ValidationError("phantom needs at least one class");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) throw ValidationError("noise must be in [0, 1]");
  for (const Blob& b : spec.blobs) {
    if (b.class_index >= spec.classes) throw ValidationError("blob class index out of range");
    for (std::size_t d = 0; d < spec.shape.depth; ++d) {
      const double ry = b.ry(d);
      const double rx = b.rx(d);
      if (!(ry > 0.0 && rx > 0.0)) throw ValidationError("blob radii must stay positive");
      const double cy = b.cy(d);
      const double cx = b.cx(d);
      if (cy - ry < 0.0 || cy + ry > static_cast<double>(spec.shape.height - 1) ||
          cx - rx < 0.0 || cx + rx > static_cast<double>(spec.shape.width - 1)) {
        throw ValidationError("blob leaves the grid on slice " + std::to_string(d));
      }
    }
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const GridShape& s = spec.shape;
  LabelMask label(spec.classes, s);
  std::vector<float> voxels(s.voxels(), kBackgroundIntensity);

  for (const Blob& b : spec.blobs) {
    for (std::size_t d = 0; d < s.depth; ++d) {
      const double cy = b.cy(d), cx = b.cx(d), ry = b.ry(d), rx = b.rx(d);
      for (std::size_t y = 0; y < s.height; ++y) {
        const double ny = (static_cast<double>(y) - cy) / ry;
        for (std::size_t x = 0; x < s.width; ++x) {
          const double nx = (static_cast<double>(x) - cx) / rx;
          if (ny * ny + nx * nx <= 1.0) {
            label.set(b.class_index, d, y, x, true);
            voxels[(d * s.height + y) * s.width + x] = kForegroundIntensity;
          }
        }
      }
    }
  }

  if (spec.noise > 0.0) {
    auto rng = make_rng(spec.seed, "phantom-noise");
    std::normal_distribution<double> gauss(0.0, spec.noise);
    for (float& v : voxels) {
      v = static_cast<float>(std::clamp(static_cast<double>(v) + gauss(rng), 0.0, 1.0));
    }
  }
  return {Volume(s, std::move(voxels)), std::move(label)};
}

std::vector<PhantomSpec> sample_phantom_specs(const DatasetSpec& ds) {
  if (ds.cases == 0) throw ValidationError("dataset needs at least one case");
  if (ds.radius_jitter < 0.0 || ds.center_jitter < 0.0) {
    throw ValidationError("jitter must be non-negative");
  }
  std::vector<PhantomSpec> out;
  out.reserve(ds.cases);
  for (std::size_t c = 0; c < ds.cases; ++c) {
    auto rng = make_rng(ds.seed, "phantom-layout", c);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    PhantomSpec spec;
    spec.seed = ds.seed * 1000003ull + c;
    spec.shape = ds.shape;
    spec.classes = ds.classes;
    spec.noise = ds.noise;
    for (std::size_t k = 0; k < ds.classes; ++k) {
      Blob b;
      b.class_index = k;
      b.radius_y = ds.radius_y + ds.radius_jitter * unit(rng);
      b.radius_x = ds.radius_x + ds.radius_jitter * unit(rng);
      b.drift_y = ds.drift_y;
      b.drift_x = ds.drift_x;
      b.growth = ds.growth;
      const double depth_mid = 0.5 * static_cast<double>(ds.shape.depth - 1);
      // Nominal centre puts the blob's mid-depth cross-section at the grid centre.
      const double nom_y = 0.5 * static_cast<double>(ds.shape.height - 1) - ds.drift_y * depth_mid;
      const double nom_x = 0.5 * static_cast<double>(ds.shape.width - 1) - ds.drift_x * depth_mid;
      auto [ylo, yhi] = centre_range(b.radius_y, b.drift_y, b.growth, ds.shape.depth, ds.shape.height);
      auto [xlo, xhi] = centre_range(b.radius_x, b.drift_x, b.growth, ds.shape.depth, ds.shape.width);
      ylo = std::max(ylo, nom_y - ds.center_jitter);
      yhi = std::min(yhi, nom_y + ds.center_jitter);
      xlo = std::max(xlo, nom_x - ds.center_jitter);
      xhi = std::min(xhi, nom_x + ds.center_jitter);
      if (ylo > yhi || xlo > xhi) {
        throw ValidationError("dataset blobs cannot fit the grid with the requested drift/radius");
      }
      b.center_y = ylo + 0.5 * (unit(rng) + 1.0) * (yhi - ylo);
      b.center_x = xlo + 0.5 * (unit(rng) + 1.0) * (xhi - xlo);
      spec.blobs.push_back(b);
    }
    validate(spec);
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace volseg
