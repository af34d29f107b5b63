#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace volseg {

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Independent generator for a (seed, stream, a, b) tuple. Callers use
/// distinct stream tags so enabling or disabling one consumer never shifts
/// the draws seen by another.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
  const std::uint64_t tag = fnv1a(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace volseg
