#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "volseg/bd.hpp"
#include "volseg/errors.hpp"
#include "volseg/gradcheck.hpp"

using namespace volseg;

namespace {

FeatureTensor random_features(std::mt19937_64& rng, std::size_t c, std::size_t d, std::size_t h,
                              std::size_t w) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d * h * w * c);
  for (auto& x : v) x = n(rng);
  return {c, d, h, w, ad::Tensor::constant(d * h * w, c, std::move(v))};
}

void set(ad::Parameter& p, std::vector<double> v) {
  REQUIRE(v.size() == p.tensor.size());
  std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
}

void fill(ad::Parameter& p, double v) {
  std::fill(p.tensor.mutable_values().begin(), p.tensor.mutable_values().end(), v);
}

std::vector<double> identity(std::size_t c) {
  std::vector<double> v(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) v[i * c + i] = 1.0;
  return v;
}

oracle::Mat values(const ad::Parameter& p) {
  return oracle::mat(p.tensor.rows(), p.tensor.cols(), p.tensor.values());
}

oracle::Mat rows_of(const ad::Tensor& t, std::size_t first, std::size_t count) {
  return oracle::mat(count, t.cols(), t.values().subspan(first * t.cols(), count * t.cols()));
}

}  // namespace

TEST_CASE("memory attention, 2 slices of 1 token, hand values") {
  auto p = bd::BdParams::init(2, 1, 0);
  for (auto* w : {&p.init_weight, &p.memory.query, &p.memory.key, &p.memory.value, &p.memory.output})
    set(*w, identity(2));
  const FeatureTensor z{2, 2, 1, 1, ad::Tensor::constant(2, 2, {1.0, 0.0, 0.0, 2.0})};
  const auto out = bd::memory_attend_boundary(z, p);

  // Slice 0 only sees itself: x + x.
  CHECK(out.tokens.at(0, 0) == 2.0);
  CHECK(out.tokens.at(0, 1) == 0.0);
  // Slice 1 sees keys a = (1, 0) and b = (0, 2) with query b:
  // logits 0 and 4 / sqrt 2.
  const double wb = 1.0 / (1.0 + std::exp(-4.0 / std::sqrt(2.0)));
  const double wa = 1.0 - wb;
  CHECK(out.tokens.at(1, 0) == doctest::Approx(0.0 + wa * 1.0).epsilon(1e-14));
  CHECK(out.tokens.at(1, 1) == doctest::Approx(2.0 + wb * 2.0).epsilon(1e-14));
}

TEST_CASE("memory attention with one slice is plain self-attention") {
  std::mt19937_64 rng(1);
  const auto p = bd::BdParams::init(4, 1, 2);
  const auto z = random_features(rng, 4, 1, 2, 3);
  const auto out = bd::memory_attend_boundary(z, p);
  const auto x = oracle::mul(rows_of(z.tokens, 0, 6), values(p.init_weight));
  const auto att = oracle::attention(oracle::mul(x, values(p.memory.query)),
                                     oracle::mul(x, values(p.memory.key)),
                                     oracle::mul(x, values(p.memory.value)));
  const auto proj = oracle::mul(att, values(p.memory.output));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(out.tokens.at(i, c) == doctest::Approx(x[i][c] + proj[i][c]).epsilon(1e-12));
}

TEST_CASE("memory attention is causal over slices") {
  std::mt19937_64 rng(3);
  const auto p = bd::BdParams::init(4, 1, 4);
  const auto z = random_features(rng, 4, 4, 2, 2);
  const auto base = bd::memory_attend_boundary(z, p);
  std::normal_distribution<double> n(0.0, 5.0);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> v(z.tokens.values().begin(), z.tokens.values().end());
    for (std::size_t r = (i + 1) * 4; r < 16; ++r)
      for (std::size_t c = 0; c < 4; ++c) v[r * 4 + c] += n(rng);
    const FeatureTensor zp{4, 4, 2, 2, ad::Tensor::constant(16, 4, v)};
    const auto out = bd::memory_attend_boundary(zp, p);
    for (std::size_t r = 0; r < (i + 1) * 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out.tokens.at(r, c) == base.tokens.at(r, c));
  }
}

TEST_CASE("causal attention weight rows are distributions over the allowed prefix") {
  std::mt19937_64 rng(5);
  const auto p = bd::BdParams::init(4, 1, 6);
  const auto z = random_features(rng, 4, 3, 2, 2);
  const auto ranges = nn::causal_slice_ranges(3, 4);
  const auto w = nn::attention_weights(z.tokens, z.tokens, p.memory.query, p.memory.key, ranges);
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 12; ++c) {
      if (c >= (r / 4 + 1) * 4) CHECK(w.at(r, c) == 0.0);
      s += w.at(r, c);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cross attention") {
  std::mt19937_64 rng(7);
  auto p = bd::BdParams::init(4, 1, 8);

  SUBCASE("a single key per slice returns its value row") {
    const auto z = random_features(rng, 4, 3, 1, 1);
    const auto zb = bd::with_tokens(z, random_features(rng, 4, 3, 1, 1).tokens);
    const auto out = bd::cross_attend(zb, z, p);
    const auto v = oracle::mul(rows_of(z.tokens, 0, 3), values(p.cross_value));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(out.tokens.at(r, c) == doctest::Approx(v[r][c]).epsilon(1e-14));
  }

  SUBCASE("zero key projection averages the slice's values") {
    fill(p.cross_key, 0.0);
    const auto z = random_features(rng, 4, 2, 1, 3);
    const auto zb = bd::with_tokens(z, random_features(rng, 4, 2, 1, 3).tokens);
    const auto out = bd::cross_attend(zb, z, p);
    const auto v = oracle::mul(rows_of(z.tokens, 0, 6), values(p.cross_value));
    for (std::size_t r = 0; r < 6; ++r) {
      const std::size_t s = r / 3;
      for (std::size_t c = 0; c < 4; ++c) {
        const double mean = (v[3 * s][c] + v[3 * s + 1][c] + v[3 * s + 2][c]) / 3.0;
        CHECK(out.tokens.at(r, c) == doctest::Approx(mean).epsilon(1e-13));
      }
    }
  }

  SUBCASE("two tokens, identity projections, hand numbers") {
    auto q = bd::BdParams::init(2, 1, 0);
    for (auto* w : {&q.cross_query, &q.cross_key, &q.cross_value}) set(*w, identity(2));
    // Keys/values k1 = (1, 0), k2 = (0, 1); query (2, 0).
    const FeatureTensor z{2, 1, 1, 2, ad::Tensor::constant(2, 2, {1, 0, 0, 1})};
    const auto zb = bd::with_tokens(z, ad::Tensor::constant(2, 2, {2, 0, 0, 0}));
    const auto out = bd::cross_attend(zb, z, q);
    const double w1 = 1.0 / (1.0 + std::exp(-2.0 / std::sqrt(2.0)));
    CHECK(out.tokens.at(0, 0) == doctest::Approx(w1).epsilon(1e-14));
    CHECK(out.tokens.at(0, 1) == doctest::Approx(1.0 - w1).epsilon(1e-14));
    // Zero query: uniform.
    CHECK(out.tokens.at(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(out.tokens.at(1, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }

  SUBCASE("slices never read each other") {
    const auto z = random_features(rng, 4, 2, 2, 2);
    const auto zb = bd::with_tokens(z, random_features(rng, 4, 2, 2, 2).tokens);
    const auto base = bd::cross_attend(zb, z, p);
    std::vector<double> v(z.tokens.values().begin(), z.tokens.values().end());
    for (std::size_t i = 16; i < 32; ++i) v[i] += 3.0;
    const FeatureTensor z2{4, 2, 2, 2, ad::Tensor::constant(8, 4, v)};
    const auto out = bd::cross_attend(zb, z2, p);
    for (std::size_t i = 0; i < 16; ++i) CHECK(out.tokens.values()[i] == base.tokens.values()[i]);
  }

  SUBCASE("shape mismatch") {
    const auto z = random_features(rng, 4, 2, 2, 2);
    const auto zb = bd::with_tokens(random_features(rng, 4, 1, 2, 2),
                                    random_features(rng, 4, 1, 2, 2).tokens);
    CHECK_THROWS_AS(bd::cross_attend(zb, z, p), ValidationError);
  }
}

TEST_CASE("refinement: residual MLP over layer norm") {
  std::mt19937_64 rng(9);
  auto p = bd::BdParams::init(4, 1, 10);

  SUBCASE("zero MLP output is the identity") {
    fill(p.mlp_out_weight, 0.0);
    fill(p.mlp_out_bias, 0.0);
    const auto z = random_features(rng, 4, 2, 2, 2);
    const auto out = bd::refine_boundary_features(bd::with_tokens(z, z.tokens), p);
    for (std::size_t i = 0; i < z.tokens.size(); ++i)
      CHECK(out.tokens.values()[i] == z.tokens.values()[i]);
  }

  SUBCASE("one token against a straight-line recomputation") {
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto* w : {&p.norm_scale, &p.norm_shift, &p.mlp_in_bias, &p.mlp_out_bias})
      for (double& v : w->tensor.mutable_values()) v = n(rng);
    const auto z = random_features(rng, 4, 1, 1, 1);
    const auto out = bd::refine_boundary_features(bd::with_tokens(z, z.tokens), p);
    const auto x = z.tokens.values();
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v / 4.0;
    for (double v : x) var += (v - mean) * (v - mean) / 4.0;
    std::vector<double> ln(4);
    for (std::size_t c = 0; c < 4; ++c)
      ln[c] = (x[c] - mean) / std::sqrt(var + bd::kLayerNormEps) * p.norm_scale.tensor.values()[c] +
              p.norm_shift.tensor.values()[c];
    const auto w1 = values(p.mlp_in_weight), w2 = values(p.mlp_out_weight);
    std::vector<double> hidden(8);
    for (std::size_t u = 0; u < 8; ++u) {
      double s = p.mlp_in_bias.tensor.values()[u];
      for (std::size_t c = 0; c < 4; ++c) s += ln[c] * w1[c][u];
      hidden[u] = oracle::gelu(s);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double o = p.mlp_out_bias.tensor.values()[c] + x[c];
      for (std::size_t u = 0; u < 8; ++u) o += hidden[u] * w2[u][c];
      CHECK(out.tokens.at(0, c) == doctest::Approx(o).epsilon(1e-12));
    }
  }

  SUBCASE("input Jacobian is identity plus the MLP-of-norm part") {
    const auto z = random_features(rng, 4, 1, 2, 1);
    auto x = ad::make_parameter("x", 2, 4, {z.tokens.values().begin(), z.tokens.values().end()});
    std::vector<double> w(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : w) v = n(rng);
    const FeatureTensor like{4, 1, 2, 1, x.tensor};
    auto full = ad::weighted_sum(bd::refine_boundary_features(bd::with_tokens(like, x.tensor), p).tokens, w);
    full.backward();
    const std::vector<double> g_full(x.tensor.grad().begin(), x.tensor.grad().end());
    x.tensor.zero_grad();
    auto branch = ad::weighted_sum(
        ad::sub(bd::refine_boundary_features(bd::with_tokens(like, x.tensor), p).tokens, x.tensor), w);
    branch.backward();
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(g_full[i] - x.tensor.grad()[i] == doctest::Approx(w[i]).epsilon(1e-12));
  }
}

TEST_CASE("boundary head") {
  std::mt19937_64 rng(11);
  auto p = bd::BdParams::init(4, 1, 12);
  const auto z = random_features(rng, 4, 3, 8, 8);
  const auto zb = bd::with_tokens(z, z.tokens);

  SUBCASE("shape and block replication") {
    const auto prob = bd::boundary_head(zb, p, 4);
    CHECK(prob.rows() == 1);
    CHECK(prob.cols() == 3 * 32 * 32);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const double v = prob.values()[(d * 32 + y) * 32 + x];
          const double corner = prob.values()[(d * 32 + y / 4 * 4) * 32 + x / 4 * 4];
          CHECK(v == corner);
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
    const double token = prob.values()[(1 * 32 + 2 * 4) * 32 + 5 * 4];
    double logit = p.head_bias.tensor.values()[0];
    for (std::size_t c = 0; c < 4; ++c) logit += z.at(c, 1, 2, 5) * p.head_weight.tensor.at(c, 0);
    CHECK(token == doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-14));
  }

  SUBCASE("zero weights give 0.5 everywhere") {
    fill(p.head_weight, 0.0);
    const auto half = bd::boundary_head(zb, p, 4);
    for (double v : half.values()) CHECK(v == 0.5);
  }
}

TEST_CASE("class-balanced boundary loss") {
  SUBCASE("4 pixels, one boundary, p = 0.5") {
    BoundaryMask gt(1, {1, 2, 2});
    gt.set(0, 0, 0, 0, true);
    const auto loss = bd::boundary_loss(ad::Tensor::constant(1, 4, {0.5, 0.5, 0.5, 0.5}), gt);
    CHECK(std::abs(loss.value.item() - 1.5 * std::log(2.0)) < 1e-9);
    CHECK(loss.degenerate_classes.empty());
  }
  SUBCASE("perfect prediction") {
    BoundaryMask gt(1, {1, 2, 2});
    gt.set(0, 0, 1, 0, true);
    CHECK(bd::boundary_loss(ad::Tensor::constant(1, 4, {0, 0, 1, 0}), gt).value.item() <= 1e-6);
    // The loss is a sum, so the clamp residue grows with the pixel count:
    // at most N/2 * -ln(1 - 1e-7).
    std::mt19937_64 rng(13);
    const BoundaryMask big(oracle::random_mask(rng, 1, {2, 4, 4}, 0.3));
    const std::vector<double> p(big.bits().begin(), big.bits().end());
    CHECK(bd::boundary_loss(ad::Tensor::constant(1, 32, p), big).value.item() <= 16 * 1.0000001e-7);
  }
  SUBCASE("degenerate slabs contribute 0 and are reported") {
    BoundaryMask all(1, {1, 2, 2}, std::vector<std::uint8_t>(4, 1));
    const auto a = bd::boundary_loss(ad::Tensor::constant(1, 4, {0.5, 0.5, 0.5, 0.5}), all);
    CHECK(a.value.item() == 0.0);
    CHECK(a.degenerate_classes == std::vector<std::size_t>{0});
    BoundaryMask none(1, {1, 2, 2});
    const auto b = bd::boundary_loss(ad::Tensor::constant(1, 4, {0.2, 0.9, 0.5, 0.5}), none);
    CHECK(b.value.item() == 0.0);
    CHECK(b.degenerate_classes.size() == 1);
  }
  SUBCASE("errors") {
    BoundaryMask gt(1, {1, 2, 2});
    CHECK_THROWS_AS(bd::boundary_loss(ad::Tensor::constant(1, 3, {0.5, 0.5, 0.5}), gt),
                    ValidationError);
  }
}

TEST_CASE("boundary loss equals a per-pixel double loop") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const BoundaryMask gt(oracle::random_mask(rng, 1, {2, 4, 4}, 0.35));
    std::vector<double> p(32);
    for (auto& v : p) v = u(rng);
    if (trial == 0) p[3] = 0.0;  // exercises the clamp
    double n_bd = 0.0;
    for (auto b : gt.bits()) n_bd += b;
    const double n = 32.0, n_non = n - n_bd;
    double expected = 0.0;
    for (std::size_t j = 0; j < 32; ++j) {
      const double q = std::clamp(p[j], 1e-7, 1.0 - 1e-7);
      const double t = gt.bits()[j];
      const double bce = -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
      expected += (t == 1.0 ? n_non / n : n_bd / n) * bce;
    }
    CHECK(bd::boundary_loss(ad::Tensor::constant(1, 32, p), gt).value.item() ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("boundary pixels get N_nonbd / N_bd times the gradient") {
  BoundaryMask gt(1, {1, 2, 4});
  gt.set(0, 0, 0, 0, true);
  gt.set(0, 0, 1, 3, true);
  auto p = ad::make_parameter("p", 1, 8, std::vector<double>(8, 0.5));
  bd::boundary_loss(p.tensor, gt).value.backward();
  const double g_bd = p.tensor.grad()[0];
  const double g_non = p.tensor.grad()[1];
  CHECK(g_bd < 0.0);
  CHECK(g_non > 0.0);
  CHECK(std::abs(g_bd) / std::abs(g_non) == doctest::Approx(6.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("boundary loss gradient through head, refinement, cross and memory attention") {
  std::mt19937_64 rng(17);
  auto p = bd::BdParams::init(4, 1, 18);
  const auto z = random_features(rng, 4, 2, 1, 2);  // 2 slices, 4 tokens
  BoundaryMask gt(1, {2, 2, 4});
  gt.set(0, 0, 0, 1, true);
  gt.set(0, 1, 1, 2, true);
  gt.set(0, 1, 0, 0, true);
  auto f = [&] {
    const auto zb = bd::memory_attend_boundary(z, p);
    const auto out = bd::refine_boundary_features(bd::cross_attend(zb, z, p), p);
    return bd::boundary_loss(bd::boundary_head(out, p, 2), gt).value;
  };
  const auto report = ad::grad_check(f, p.parameters());
  CAPTURE(report.worst_parameter);
  CHECK(report.max_rel_error < 1e-4);
}
