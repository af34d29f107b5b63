#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace volseg {

/// Voxel edge lengths in (depth, height, width) order.
using Spacing = std::array<float, 3>;

struct GridShape {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t voxels() const { return depth * height * width; }
  std::size_t slice_size() const { return height * width; }
  bool operator==(const GridShape&) const = default;
};

/// Scalar intensity grid, slice-major then row-major.
class Volume {
 public:
  Volume() = default;
  Volume(GridShape shape, std::vector<float> voxels, Spacing spacing = {1.f, 1.f, 1.f});

  const GridShape& shape() const { return shape_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> voxels() const { return voxels_; }
  std::span<float> voxels() { return voxels_; }

  float at(std::size_t d, std::size_t y, std::size_t x) const {
    return voxels_[(d * shape_.height + y) * shape_.width + x];
  }
  float& at(std::size_t d, std::size_t y, std::size_t x) {
    return voxels_[(d * shape_.height + y) * shape_.width + x];
  }

  /// Slices [first, first + count) as a new volume.
  Volume slab(std::size_t first, std::size_t count) const;

  bool operator==(const Volume&) const = default;

 private:
  GridShape shape_;
  std::vector<float> voxels_;
  Spacing spacing_{1.f, 1.f, 1.f};
};

/// Per-class binary voxel grid, class-major. Values are 0 or 1.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(std::size_t classes, GridShape shape, Spacing spacing = {1.f, 1.f, 1.f});
  LabelMask(std::size_t classes, GridShape shape, std::vector<std::uint8_t> bits,
            Spacing spacing = {1.f, 1.f, 1.f});

  std::size_t classes() const { return classes_; }
  const GridShape& shape() const { return shape_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t index(std::size_t k, std::size_t d, std::size_t y, std::size_t x) const {
    return ((k * shape_.depth + d) * shape_.height + y) * shape_.width + x;
  }
  bool at(std::size_t k, std::size_t d, std::size_t y, std::size_t x) const {
    return bits_[index(k, d, y, x)] != 0;
  }
  void set(std::size_t k, std::size_t d, std::size_t y, std::size_t x, bool on) {
    bits_[index(k, d, y, x)] = on ? 1 : 0;
  }

  /// Foreground voxels of class k.
  std::size_t count(std::size_t k) const;
  /// Bits of class k only.
  std::span<const std::uint8_t> class_bits(std::size_t k) const;

  LabelMask slab(std::size_t first, std::size_t count) const;

  bool operator==(const LabelMask&) const = default;

 private:
  std::size_t classes_ = 0;
  GridShape shape_;
  std::vector<std::uint8_t> bits_;
  Spacing spacing_{1.f, 1.f, 1.f};
};

/// One-voxel-thick boundary of a LabelMask; same layout.
class BoundaryMask : public LabelMask {
 public:
  using LabelMask::LabelMask;
  explicit BoundaryMask(LabelMask m) : LabelMask(std::move(m)) {}
};

/// A foreground voxel is boundary iff one of its 6-connected neighbours is
/// background or lies outside the grid.
BoundaryMask derive_boundary(const LabelMask& mask);

/// Same geometry check used by the metrics surface extraction.
bool is_surface_voxel(std::span<const std::uint8_t> class_bits, const GridShape& shape,
                      std::size_t d, std::size_t y, std::size_t x);

void validate_spacing(const Spacing& spacing);

}  // namespace volseg
