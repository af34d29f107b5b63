#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "volseg/encoder.hpp"
#include "volseg/errors.hpp"

using namespace volseg;

namespace {

Volume random_volume(std::mt19937_64& rng, GridShape s) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  std::vector<float> v(s.voxels());
  for (auto& x : v) x = u(rng);
  return Volume(s, std::move(v));
}

}  // namespace

TEST_CASE("output shape is C x D x H/p x W/p") {
  std::mt19937_64 rng(1);
  const Encoder enc({4, 16, 0});
  const auto z = enc.encode(random_volume(rng, {6, 32, 32}));
  CHECK(z.channels == 16);
  CHECK(z.slices == 6);
  CHECK(z.height == 8);
  CHECK(z.width == 8);
  CHECK(z.tokens.rows() == 6 * 64);
  CHECK(z.tokens.cols() == 16);
  CHECK_NOTHROW(validate(z));
}

TEST_CASE("rejects bad configurations") {
  std::mt19937_64 rng(2);
  CHECK_THROWS_AS(Encoder({4, 16, 0}).encode(random_volume(rng, {2, 30, 32})), ValidationError);
  CHECK_THROWS_AS(Encoder({0, 16, 0}), ValidationError);
  CHECK_THROWS_AS(Encoder({4, 3, 0}), ValidationError);
}

TEST_CASE("projection is a frozen parameter") {
  const Encoder enc({4, 16, 9});
  CHECK(enc.projection().frozen);
  CHECK_FALSE(enc.projection().tensor.requires_grad());
  CHECK(enc.projection().tensor.rows() == 3 * 16);
  CHECK(Encoder({4, 16, 9}).hash() == enc.hash());
  CHECK(Encoder({4, 16, 10}).hash() != enc.hash());
}

TEST_CASE("each token is the replicated tile times the projection plus position") {
  std::mt19937_64 rng(3);
  const Encoder enc({2, 8, 4});
  const Volume v = random_volume(rng, {2, 4, 6});
  const auto z = enc.encode(v);
  const auto w = enc.projection().tensor;
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t ty = 0; ty < 2; ++ty)
      for (std::size_t tx = 0; tx < 3; ++tx)
        for (std::size_t c = 0; c < 8; ++c) {
          double expected = enc.positional(c, ty, tx);
          for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t iy = 0; iy < 2; ++iy)
              for (std::size_t ix = 0; ix < 2; ++ix)
                expected += v.at(d, ty * 2 + iy, tx * 2 + ix) * w.at(ch * 4 + iy * 2 + ix, c);
          CHECK(z.at(c, d, ty, tx) == doctest::Approx(expected).epsilon(1e-13));
        }
}

TEST_CASE("positional signal is a sin/cos ladder alternating between axes") {
  const Encoder enc({4, 16, 0});
  CHECK(enc.positional(0, 3, 5) == std::sin(3.0));
  CHECK(enc.positional(1, 3, 5) == std::cos(3.0));
  CHECK(enc.positional(2, 3, 5) == std::sin(5.0));
  CHECK(enc.positional(3, 3, 5) == std::cos(5.0));
  const double omega = std::pow(10000.0, -1.0 / 4.0);
  CHECK(enc.positional(4, 3, 5) == doctest::Approx(std::sin(3.0 * omega)).epsilon(1e-15));
  CHECK(enc.positional(6, 3, 5) == doctest::Approx(std::sin(5.0 * omega)).epsilon(1e-15));
}

TEST_CASE("zero slice yields the positional signal alone") {
  const Encoder enc({4, 16, 0});
  const auto z = enc.encode(Volume({1, 8, 8}, std::vector<float>(64, 0.f)));
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t c = 0; c < 16; ++c) CHECK(z.at(c, 0, y, x) == enc.positional(c, y, x));
}

TEST_CASE("slices are encoded independently") {
  std::mt19937_64 rng(4);
  const Encoder enc({4, 16, 0});
  const Volume v = random_volume(rng, {4, 8, 8});

  SUBCASE("identical slices give identical features") {
    std::vector<float> twice(v.voxels().begin(), v.voxels().begin() + 64);
    twice.insert(twice.end(), twice.begin(), twice.end());
    const auto z = enc.encode(Volume({2, 8, 8}, twice));
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 16; ++c) CHECK(z.tokens.at(t, c) == z.tokens.at(4 + t, c));
  }

  SUBCASE("permuting slices permutes features") {
    const std::size_t perm[4] = {2, 0, 3, 1};
    std::vector<float> shuffled;
    for (std::size_t d : perm) {
      const Volume slice = v.slab(d, 1);
      shuffled.insert(shuffled.end(), slice.voxels().begin(), slice.voxels().end());
    }
    const auto a = enc.encode(v);
    const auto b = enc.encode(Volume({4, 8, 8}, shuffled));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 16; ++c)
          CHECK(b.tokens.at(i * 4 + t, c) == a.tokens.at(perm[i] * 4 + t, c));
  }
}

TEST_CASE("linear in the intensities up to the positional term") {
  std::mt19937_64 rng(5);
  const Encoder enc({4, 8, 2});
  const Volume a = random_volume(rng, {2, 8, 8});
  const Volume b = random_volume(rng, {2, 8, 8});
  std::vector<float> mix(a.voxels().size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.25f * a.voxels()[i] + 0.5f * b.voxels()[i];
  const auto za = enc.encode(a), zb = enc.encode(b), zm = enc.encode(Volume({2, 8, 8}, mix));
  const auto z0 = enc.encode(Volume({2, 8, 8}, std::vector<float>(128, 0.f)));
  for (std::size_t i = 0; i < zm.tokens.size(); ++i) {
    const double p = z0.tokens.values()[i];
    const double expected = 0.25 * (za.tokens.values()[i] - p) + 0.5 * (zb.tokens.values()[i] - p);
    CHECK(std::abs(zm.tokens.values()[i] - p - expected) < 1e-6);
  }
}
