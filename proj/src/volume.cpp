#include "volseg/volume.hpp"

#include <cmath>
#include <string>

#include "volseg/errors.hpp"

namespace volseg {

namespace {

void validate_shape(const GridShape& shape) {
  if (shape.depth == 0 || shape.height == 0 || shape.width == 0) {
    throw ValidationError("grid dimensions must be positive");
  }
}

}  // namespace

void validate_spacing(const Spacing& spacing) {
  for (float s : spacing) {
    if (!std::isfinite(s) || s <= 0.f) throw ValidationError("voxel spacing must be positive");
  }
}

Volume::Volume(GridShape shape, std::vector<float> voxels, Spacing spacing)
    : shape_(shape), voxels_(std::move(voxels)), spacing_(spacing) {
  validate_shape(shape_);
  validate_spacing(spacing_);
  if (voxels_.size() != shape_.voxels()) {
    throw ValidationError("volume has " + std::to_string(voxels_.size()) + " voxels, expected " +
                          std::to_string(shape_.voxels()));
  }
  for (float v : voxels_) {
    if (!std::isfinite(v)) throw ValidationError("volume intensities must be finite");
  }
}

Volume Volume::slab(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > shape_.depth) throw ValidationError("slab out of range");
  const std::size_t plane = shape_.slice_size();
  std::vector<float> out(voxels_.begin() + static_cast<std::ptrdiff_t>(first * plane),
                         voxels_.begin() + static_cast<std::ptrdiff_t>((first + count) * plane));
  return Volume({count, shape_.height, shape_.width}, std::move(out), spacing_);
}

LabelMask::LabelMask(std::size_t classes, GridShape shape, Spacing spacing)
    : classes_(classes), shape_(shape), bits_(classes * shape.voxels(), 0), spacing_(spacing) {
  if (classes_ == 0) throw ValidationError("mask needs at least one class");
  validate_shape(shape_);
  validate_spacing(spacing_);
}

LabelMask::LabelMask(std::size_t classes, GridShape shape, std::vector<std::uint8_t> bits,
                     Spacing spacing)
    : classes_(classes), shape_(shape), bits_(std::move(bits)), spacing_(spacing) {
  if (classes_ == 0) throw ValidationError("mask needs at least one class");
  validate_shape(shape_);
  validate_spacing(spacing_);
  if (bits_.size() != classes_ * shape_.voxels()) {
    throw ValidationError("mask has " + std::to_string(bits_.size()) + " values, expected " +
                          std::to_string(classes_ * shape_.voxels()));
  }
  for (auto b : bits_) {
    if (b > 1) throw ValidationError("mask values must be 0 or 1");
  }
}

std::size_t LabelMask::count(std::size_t k) const {
  std::size_t n = 0;
  for (auto b : class_bits(k)) n += b;
  return n;
}

std::span<const std::uint8_t> LabelMask::class_bits(std::size_t k) const {
  const std::size_t n = shape_.voxels();
  return std::span<const std::uint8_t>(bits_).subspan(k * n, n);
}

LabelMask LabelMask::slab(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > shape_.depth) throw ValidationError("slab out of range");
  const std::size_t plane = shape_.slice_size();
  std::vector<std::uint8_t> out;
  out.reserve(classes_ * count * plane);
  for (std::size_t k = 0; k < classes_; ++k) {
    auto src = class_bits(k).subspan(first * plane, count * plane);
    out.insert(out.end(), src.begin(), src.end());
  }
  return LabelMask(classes_, {count, shape_.height, shape_.width}, std::move(out), spacing_);
}

bool is_surface_voxel(std::span<const std::uint8_t> bits, const GridShape& s, std::size_t d,
                      std::size_t y, std::size_t x) {
  auto fg = [&](std::size_t dd, std::size_t yy, std::size_t xx) {
    return bits[(dd * s.height + yy) * s.width + xx] != 0;
  };
  if (!fg(d, y, x)) return false;
  if (d == 0 || d + 1 == s.depth || y == 0 || y + 1 == s.height || x == 0 || x + 1 == s.width) {
    return true;
  }
  return !fg(d - 1, y, x) || !fg(d + 1, y, x) || !fg(d, y - 1, x) || !fg(d, y + 1, x) ||
         !fg(d, y, x - 1) || !fg(d, y, x + 1);
}

BoundaryMask derive_boundary(const LabelMask& mask) {
  const GridShape& s = mask.shape();
  BoundaryMask out(mask.classes(), s, mask.spacing());
  for (std::size_t k = 0; k < mask.classes(); ++k) {
    auto bits = mask.class_bits(k);
    for (std::size_t d = 0; d < s.depth; ++d)
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x)
          if (is_surface_voxel(bits, s, d, y, x)) out.set(k, d, y, x, true);
  }
  return out;
}

}  // namespace volseg
