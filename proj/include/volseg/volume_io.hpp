#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

// SVOL1 container, all fields little-endian:
//   8 bytes   magic "SVOL1\0\0\0"
//   4 x u32   K, D, H, W
//   3 x f32   spacing (depth, height, width)
//   1 byte    kind: 0 = intensity, 1 = mask
//   K*D*H*W   f32 payload, class-major, slice-major, row-major
inline constexpr std::size_t kSvolHeaderBytes = 8 + 16 + 12 + 1;

std::vector<std::byte> encode_volume(const Volume& volume);
std::vector<std::byte> encode_mask(const LabelMask& mask);
Volume decode_volume(std::span<const std::byte> bytes);
LabelMask decode_mask(std::span<const std::byte> bytes);

void write_volume(const Volume& volume, const std::filesystem::path& path);
void write_mask(const LabelMask& mask, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);
LabelMask read_mask(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace volseg
