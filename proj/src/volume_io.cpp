#include "volseg/volume_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "volseg/errors.hpp"

namespace volseg {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'V', 'O', 'L', '1', '\0', '\0', '\0'};
constexpr std::uint8_t kKindIntensity = 0;
constexpr std::uint8_t kKindMask = 1;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::vector<std::byte>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  }
  return v;
}

float get_f32(std::span<const std::byte> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

struct Header {
  std::size_t classes;
  GridShape shape;
  Spacing spacing;
  std::uint8_t kind;
};

std::vector<std::byte> encode_header(std::size_t classes, const GridShape& s, const Spacing& sp,
                                     std::uint8_t kind, std::size_t payload_values) {
  std::vector<std::byte> out;
  out.reserve(kSvolHeaderBytes + 4 * payload_values);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(classes));
  put_u32(out, static_cast<std::uint32_t>(s.depth));
  put_u32(out, static_cast<std::uint32_t>(s.height));
  put_u32(out, static_cast<std::uint32_t>(s.width));
  for (float v : sp) put_f32(out, v);
  out.push_back(static_cast<std::byte>(kind));
  return out;
}

Header decode_header(std::span<const std::byte> in) {
  if (in.size() < kSvolHeaderBytes) throw ValidationError("SVOL1: truncated header");
  if (std::memcmp(in.data(), kMagic.data(), kMagic.size()) != 0) {
    throw ValidationError("SVOL1: bad magic");
  }
  Header h{};
  h.classes = get_u32(in, 8);
  h.shape = {get_u32(in, 12), get_u32(in, 16), get_u32(in, 20)};
  h.spacing = {get_f32(in, 24), get_f32(in, 28), get_f32(in, 32)};
  h.kind = std::to_integer<std::uint8_t>(in[36]);
  if (h.classes == 0 || h.shape.voxels() == 0) throw ValidationError("SVOL1: zero dimension");
  if (h.kind != kKindIntensity && h.kind != kKindMask) throw ValidationError("SVOL1: unknown kind");
  validate_spacing(h.spacing);
  const std::size_t payload = in.size() - kSvolHeaderBytes;
  const std::size_t expected = h.classes * h.shape.voxels();
  if (payload % 4 != 0 || payload / 4 != expected) {
    throw ValidationError("SVOL1: header declares " + std::to_string(expected) +
                          " values but payload holds " + std::to_string(payload / 4) +
                          (payload % 4 ? " plus a partial value" : ""));
  }
  return h;
}

void write_bytes(const std::vector<std::byte>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

}  // namespace

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  return bytes;
}

std::vector<std::byte> encode_volume(const Volume& v) {
  auto out = encode_header(1, v.shape(), v.spacing(), kKindIntensity, v.shape().voxels());
  for (float x : v.voxels()) put_f32(out, x);
  return out;
}

std::vector<std::byte> encode_mask(const LabelMask& m) {
  auto out = encode_header(m.classes(), m.shape(), m.spacing(), kKindMask, m.bits().size());
  for (auto b : m.bits()) put_f32(out, b ? 1.f : 0.f);
  return out;
}

Volume decode_volume(std::span<const std::byte> in) {
  const Header h = decode_header(in);
  if (h.kind != kKindIntensity) throw ValidationError("SVOL1: expected an intensity volume");
  if (h.classes != 1) throw ValidationError("SVOL1: intensity volumes must have K = 1");
  std::vector<float> voxels(h.shape.voxels());
  for (std::size_t i = 0; i < voxels.size(); ++i) voxels[i] = get_f32(in, kSvolHeaderBytes + 4 * i);
  return Volume(h.shape, std::move(voxels), h.spacing);
}

LabelMask decode_mask(std::span<const std::byte> in) {
  const Header h = decode_header(in);
  if (h.kind != kKindMask) throw ValidationError("SVOL1: expected a mask");
  std::vector<std::uint8_t> bits(h.classes * h.shape.voxels());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const float v = get_f32(in, kSvolHeaderBytes + 4 * i);
    if (v == 0.f) {
      bits[i] = 0;
    } else if (v == 1.f) {
      bits[i] = 1;
    } else {
      throw ValidationError("SVOL1: non-binary mask value at index " + std::to_string(i));
    }
  }
  return LabelMask(h.classes, h.shape, std::move(bits), h.spacing);
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  write_bytes(encode_volume(v), path);
}

void write_mask(const LabelMask& m, const std::filesystem::path& path) {
  write_bytes(encode_mask(m), path);
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(read_file_bytes(path)); }

LabelMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file_bytes(path)); }

}  // namespace volseg
