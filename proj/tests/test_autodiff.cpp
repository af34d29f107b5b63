#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "volseg/autodiff.hpp"
#include "volseg/errors.hpp"
#include "volseg/gradcheck.hpp"

using namespace volseg;
using namespace volseg::ad;

namespace {

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Parameter random_param(std::mt19937_64& rng, const char* name, std::size_t r, std::size_t c,
                       double lo = -1.0, double hi = 1.0) {
  return make_parameter(name, r, c, random_values(rng, r * c, lo, hi));
}

// Reduces a tensor to a scalar with fixed random weights so every output
// entry sends a different upstream gradient.
Tensor probe(const Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return weighted_sum(t, random_values(rng, t.size()));
}

void expect_gradients_match(const std::function<Tensor()>& f, std::vector<Parameter*> params,
                            double tol = 1e-4) {
  const auto report = grad_check(f, params, 1e-5, tol);
  CAPTURE(report.worst_parameter);
  CAPTURE(report.worst_index);
  CHECK(report.max_rel_error < tol);
  CHECK(report.passed);
}

}  // namespace

TEST_CASE("forward examples") {
  const auto eye = Tensor::constant(2, 2, {1, 0, 0, 1});
  const auto b = Tensor::constant(2, 3, {1, 2, 3, 4, 5, 6});
  const auto prod = matmul(eye, b);
  for (std::size_t i = 0; i < 6; ++i) CHECK(prod.values()[i] == b.values()[i]);

  const auto s = softmax_rows(Tensor::constant(1, 2, {0, 0}));
  CHECK(s.at(0, 0) == 0.5);
  CHECK(s.at(0, 1) == 0.5);

  const auto ln = layernorm_rows(Tensor::constant(1, 3, {1, 2, 3}), 1e-12);
  CHECK(ln.at(0, 0) == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-9));
  CHECK(std::abs(ln.at(0, 1)) < 1e-12);
  CHECK(ln.at(0, 2) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-9));
  CHECK(ln.at(0, 2) == doctest::Approx(1.2247).epsilon(1e-4));

  const auto t = Tensor::constant(1, 4, {0, 1, 1, 0});
  CHECK(bce(t, t).item() <= 1e-6);
  CHECK(bce(Tensor::constant(1, 4, {0.5, 0.5, 0.5, 0.5}), t).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto p = Tensor::constant(2, 2, {0.3, -1.0, 2.0, 0.1});
  CHECK(mse(p, p).item() == 0.0);
  CHECK(mse(p, Tensor::zeros(2, 2)).item() == doctest::Approx((0.09 + 1 + 4 + 0.01) / 4));
}

TEST_CASE("gelu and sigmoid values") {
  const auto x = Tensor::constant(1, 4, {-2.0, 0.0, 1.0, 40.0});
  const auto g = gelu(x);
  CHECK(g.at(0, 1) == 0.0);
  CHECK(g.at(0, 2) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(g.at(0, 0) == doctest::Approx(-2.0 * 0.022750131948179195).epsilon(1e-12));
  const auto s = sigmoid(Tensor::constant(1, 3, {0.0, -800.0, 800.0}));
  CHECK(s.at(0, 0) == 0.5);
  CHECK(s.at(0, 1) >= 0.0);
  CHECK(s.at(0, 2) == 1.0);
  CHECK(std::isfinite(s.at(0, 1)));
}

TEST_CASE("errors") {
  const auto a = Tensor::constant(2, 3, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(matmul(a, a), ValidationError);
  CHECK_THROWS_AS(add(a, Tensor::zeros(3, 2)), ValidationError);
  CHECK_THROWS_AS(layernorm_rows(a, 0.0), ValidationError);
  CHECK_THROWS_AS(layernorm_rows(a, -1e-5), ValidationError);
  CHECK_THROWS_AS(bce(Tensor::constant(1, 2, {0.5, 0.5}), Tensor::constant(1, 2, {0.0, 0.5})),
                  ValidationError);
  CHECK_THROWS_AS(mse(a, Tensor::zeros(1, 6)), ValidationError);
  CHECK_THROWS_AS(Tensor::constant(2, 2, {1.0, 2.0, 3.0}), ValidationError);
  CHECK_THROWS_AS(a.backward(), ValidationError);
  CHECK_THROWS_AS(Tensor::constant(1, 1, {NAN}), NumericalError);
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(3);
  auto x = random_param(rng, "x", 3, 4);
  SUBCASE("sum is linear") {
    auto report = grad_check([&] { return sum(x.tensor); }, std::vector<Parameter*>{&x});
    CHECK(report.max_rel_error < 1e-10);
    CHECK(report.coordinates == 12);
    x.tensor.zero_grad();
    sum(x.tensor).backward();
    for (double g : x.tensor.grad()) CHECK(g == 1.0);
  }
  SUBCASE("mse against zero") {
    auto zero = Tensor::zeros(3, 4);
    auto report = grad_check([&] { return mse(x.tensor, zero); }, std::vector<Parameter*>{&x});
    CHECK(report.max_rel_error < 1e-6);
  }
  SUBCASE("step outside [1e-6, 1e-3]") {
    auto f = [&] { return sum(x.tensor); };
    CHECK_THROWS_AS(grad_check(f, std::vector<Parameter*>{&x}, 1e-7), ValidationError);
    CHECK_THROWS_AS(grad_check(f, std::vector<Parameter*>{&x}, 1e-2), ValidationError);
  }
  SUBCASE("non-finite values are reported") {
    const auto ones = Tensor::constant(3, 4, std::vector<double>(12, 1.0));
    auto f = [&] { return sum(div(ones, sub(x.tensor, x.tensor))); };
    CHECK_THROWS_AS(grad_check(f, std::vector<Parameter*>{&x}), NumericalError);
  }
  SUBCASE("frozen parameters are skipped") {
    auto frozen = make_parameter("w", 3, 4, random_values(rng, 12), true);
    auto report = grad_check([&] { return sum(mul(x.tensor, frozen.tensor)); },
                             std::vector<Parameter*>{&x, &frozen});
    CHECK(report.coordinates == 12);
  }
}

TEST_CASE("every primitive matches finite differences on random shapes") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    CAPTURE(m);
    CAPTURE(k);
    CAPTURE(n);
    auto a = random_param(rng, "a", m, k);
    auto b = random_param(rng, "b", k, n);
    auto c = random_param(rng, "c", m, k);
    auto pos = random_param(rng, "pos", m, k, 0.5, 2.0);
    auto row = random_param(rng, "row", 1, k);
    auto prob = random_param(rng, "prob", m, k, 0.05, 0.95);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> bits(m * k);
    for (auto& v : bits) v = coin(rng) ? 1.0 : 0.0;
    const auto target = Tensor::constant(m, k, bits);
    const std::uint64_t s = rng();

    expect_gradients_match([&] { return probe(matmul(a.tensor, b.tensor), s); }, {&a, &b});
    expect_gradients_match([&] { return probe(matmul_nt(a.tensor, c.tensor), s); }, {&a, &c});
    expect_gradients_match([&] { return probe(add(a.tensor, c.tensor), s); }, {&a, &c});
    expect_gradients_match([&] { return probe(sub(a.tensor, c.tensor), s); }, {&a, &c});
    expect_gradients_match([&] { return probe(mul(a.tensor, c.tensor), s); }, {&a, &c});
    expect_gradients_match([&] { return probe(div(a.tensor, pos.tensor), s); }, {&a, &pos});
    expect_gradients_match([&] { return probe(scale(a.tensor, -2.5), s); }, {&a});
    expect_gradients_match([&] { return probe(add_scalar(a.tensor, 0.7), s); }, {&a});
    expect_gradients_match([&] { return probe(add_row(a.tensor, row.tensor), s); }, {&a, &row});
    expect_gradients_match([&] { return probe(mul_row(a.tensor, row.tensor), s); }, {&a, &row});
    expect_gradients_match([&] { return probe(gelu(a.tensor), s); }, {&a});
    expect_gradients_match([&] { return probe(sigmoid(a.tensor), s); }, {&a});
    expect_gradients_match([&] { return probe(concat_cols(a.tensor, c.tensor), s); }, {&a, &c});
    expect_gradients_match([&] { return mean(a.tensor); }, {&a});
    expect_gradients_match([&] { return probe(softmax_rows(a.tensor), s); }, {&a});
    if (k > 1) {
      expect_gradients_match([&] { return probe(layernorm_rows(a.tensor, 1e-5), s); }, {&a});
    }
    expect_gradients_match([&] { return mse(a.tensor, c.tensor); }, {&a, &c});
    expect_gradients_match([&] { return bce(prob.tensor, target); }, {&prob});
    expect_gradients_match([&] { return probe(bce_terms(prob.tensor, target), s); }, {&prob});

    // gather: reversed order with a hole, entries read twice.
    std::vector<std::size_t> src(m * k + 1);
    for (std::size_t i = 0; i < m * k; ++i) src[i] = (m * k - 1 - i);
    src.back() = kNoSource;
    src[0] = 0;
    expect_gradients_match([&] { return probe(gather(a.tensor, src, 1, src.size()), s); }, {&a});

    // Masked variants: each row reads a random non-empty key range.
    std::vector<KeyRange> ranges(m);
    for (auto& r : ranges) {
      std::uniform_int_distribution<std::size_t> lo(0, k - 1);
      r.begin = lo(rng);
      std::uniform_int_distribution<std::size_t> hi(r.begin + 1, k);
      r.end = hi(rng);
    }
    expect_gradients_match([&] { return probe(softmax_rows(a.tensor, ranges), s); }, {&a});
    auto keys = random_param(rng, "keys", k, n);
    std::vector<KeyRange> key_ranges(m);
    for (auto& r : key_ranges) {
      std::uniform_int_distribution<std::size_t> lo(0, k - 1);
      r.begin = lo(rng);
      r.end = std::min(k, r.begin + 2);
    }
    auto q = random_param(rng, "q", m, n);
    expect_gradients_match([&] { return probe(matmul_nt(q.tensor, keys.tensor, key_ranges), s); },
                           {&q, &keys});
  }
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = Tensor::constant(6, 7, random_values(rng, 42, -30.0, 30.0));
    const auto s = softmax_rows(x);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.at(r, c) > 0.0);
        CHECK(s.at(r, c) < 1.0 + 1e-15);
        total += s.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("masked softmax puts zero outside the range") {
  const auto x = Tensor::constant(2, 4, {1, 2, 3, 4, 4, 3, 2, 1});
  const std::vector<KeyRange> ranges{{0, 2}, {1, 4}};
  const auto s = softmax_rows(x, ranges);
  CHECK(s.at(0, 2) == 0.0);
  CHECK(s.at(0, 3) == 0.0);
  CHECK(s.at(1, 0) == 0.0);
  CHECK(s.at(0, 0) + s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.at(0, 1) / s.at(0, 0) == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("layernorm rows are standardised") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = Tensor::constant(5, 8, random_values(rng, 40, -10.0, 10.0));
    const auto y = layernorm_rows(x, 1e-9);
    for (std::size_t r = 0; r < 5; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8.0;
      for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8.0;
      CHECK(std::abs(mean) < 1e-10);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("frozen parameters pass gradient through but keep their values") {
  std::mt19937_64 rng(31);
  auto frozen = make_parameter("w", 3, 3, random_values(rng, 9), true);
  auto x = random_param(rng, "x", 2, 3);
  const std::vector<double> before(frozen.tensor.values().begin(), frozen.tensor.values().end());
  auto loss = probe(gelu(matmul(x.tensor, frozen.tensor)), 5);
  loss.backward();
  CHECK(frozen.tensor.grad().empty());
  REQUIRE(x.tensor.grad().size() == 6);
  double norm = 0.0;
  for (double g : x.tensor.grad()) norm += std::abs(g);
  CHECK(norm > 0.0);
  CHECK(std::equal(before.begin(), before.end(), frozen.tensor.values().begin()));
  expect_gradients_match([&] { return probe(gelu(matmul(x.tensor, frozen.tensor)), 5); }, {&x});
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
  auto x = make_parameter("x", 1, 2, {1.0, 2.0});
  sum(x.tensor).backward();
  sum(scale(x.tensor, 2.0)).backward();
  CHECK(x.tensor.grad()[0] == 3.0);
  x.tensor.zero_grad();
  CHECK(x.tensor.grad()[1] == 0.0);
}

TEST_CASE("bce clamps probabilities") {
  const auto p = Tensor::constant(1, 2, {0.0, 1.0});
  const auto t = Tensor::constant(1, 2, {1.0, 0.0});
  const double expected = -std::log(kProbabilityClamp);
  CHECK(bce(p, t).item() == doctest::Approx(expected).epsilon(1e-9));
}
