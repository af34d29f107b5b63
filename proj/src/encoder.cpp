#include "volseg/encoder.hpp"

#include <bit>
#include <cmath>
#include <random>

#include "volseg/errors.hpp"
#include "volseg/rng.hpp"

namespace volseg {

namespace {
constexpr std::size_t kInputChannels = 3;
}

void validate(const FeatureTensor& z) {
  if (!z.tokens.defined() || z.tokens.rows() != z.token_count() || z.tokens.cols() != z.channels) {
    throw ValidationError("feature tensor shape does not match its metadata");
  }
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(cfg) {
  if (cfg_.patch < 1) throw ValidationError("encoder patch size must be >= 1");
  if (cfg_.channels < 4) throw ValidationError("encoder needs at least 4 channels");
  const std::size_t fan_in = kInputChannels * cfg_.patch * cfg_.patch;
  auto rng = make_rng(cfg_.seed, "encoder-projection");
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  std::vector<double> w(fan_in * cfg_.channels);
  for (double& v : w) v = gauss(rng);
  projection_ = ad::make_parameter("encoder.projection", fan_in, cfg_.channels, std::move(w),
                                   /*frozen=*/true);
}

double Encoder::positional(std::size_t c, std::size_t y, std::size_t x) const {
  // Channel pairs alternate between the y and x axes; each pair is a
  // (sin, cos) at a geometric frequency ladder.
  const std::size_t pair = c / 2;
  const std::size_t axis = pair % 2;
  const std::size_t freq_index = pair / 2;
  const std::size_t freqs = (cfg_.channels + 3) / 4;
  const double omega =
      std::pow(10000.0, -static_cast<double>(freq_index) / static_cast<double>(freqs));
  const double pos = static_cast<double>(axis == 0 ? y : x);
  return (c % 2 == 0) ? std::sin(pos * omega) : std::cos(pos * omega);
}

FeatureTensor Encoder::encode(const Volume& volume) const {
  const GridShape& s = volume.shape();
  const std::size_t p = cfg_.patch;
  if (s.height % p != 0 || s.width % p != 0) {
    throw ValidationError("slice size " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                          " is not divisible by patch " + std::to_string(p));
  }
  const std::size_t hp = s.height / p, wp = s.width / p;
  const std::size_t tile = p * p;
  const std::size_t fan_in = kInputChannels * tile;
  const std::size_t n = s.depth * hp * wp;

  std::vector<double> patches(n * fan_in);
  for (std::size_t d = 0; d < s.depth; ++d)
    for (std::size_t ty = 0; ty < hp; ++ty)
      for (std::size_t tx = 0; tx < wp; ++tx) {
        double* row = &patches[((d * hp + ty) * wp + tx) * fan_in];
        for (std::size_t iy = 0; iy < p; ++iy)
          for (std::size_t ix = 0; ix < p; ++ix) {
            const double v = volume.at(d, ty * p + iy, tx * p + ix);
            for (std::size_t ch = 0; ch < kInputChannels; ++ch) row[ch * tile + iy * p + ix] = v;
          }
      }

  const std::size_t c = cfg_.channels;
  std::vector<double> pos(n * c);
  for (std::size_t d = 0; d < s.depth; ++d)
    for (std::size_t ty = 0; ty < hp; ++ty)
      for (std::size_t tx = 0; tx < wp; ++tx)
        for (std::size_t ch = 0; ch < c; ++ch)
          pos[((d * hp + ty) * wp + tx) * c + ch] = positional(ch, ty, tx);

  auto projected =
      ad::matmul(ad::Tensor::constant(n, fan_in, std::move(patches)), projection_.tensor);
  FeatureTensor z;
  z.channels = c;
  z.slices = s.depth;
  z.height = hp;
  z.width = wp;
  z.tokens = ad::add(projected, ad::Tensor::constant(n, c, std::move(pos)));
  return z;
}

std::uint64_t Encoder::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (double v : projection_.tensor.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace volseg
