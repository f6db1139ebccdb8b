/* Copyright 2026 The JDND Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "jdnd/entropy.hpp"
#include "jdnd/range_coder.hpp"
#include "test_util.hpp"

namespace jdnd {
namespace {

TEST_CASE("quantize: rounding convention") {
  Tensor<float> v({5});
  v[0] = 0.4f;
  v[1] = -1.5f;
  v[2] = 2.5f;
  v[3] = -0.5f;
  v[4] = 0.5f;
  const Tensor<float> q = quantize(v, QuantMode::kInfer);
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == -2.0f);
  CHECK(q[2] == 3.0f);
  CHECK(q[3] == -1.0f);
  CHECK(q[4] == 1.0f);
  CHECK(test::bit_equal(quantize(q, QuantMode::kInfer), q));

  const Tensor<float> r = test::random_tensor<float>({1000}, 3, 5.0f);
  const Tensor<float> t = quantize(r, QuantMode::kTrain, 9);
  CHECK((t.array() - r.array()).abs().maxCoeff() <= 0.5f);
  CHECK(test::bit_equal(t, quantize(r, QuantMode::kTrain, 9)));
}

double phi(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

TEST_CASE("gaussian_bits: unit-scale centre bin") {
  const double p = phi(0.5) - phi(-0.5);
  CHECK(p == doctest::Approx(0.38292492254802).epsilon(1e-12));
  CHECK(gaussian_pmf(3.0, 3.0, 1.0) == doctest::Approx(p).epsilon(1e-12));
  CHECK(gaussian_bits(3.0, 3.0, 1.0) == doctest::Approx(-std::log2(p)).epsilon(1e-12));
  CHECK(gaussian_bits(3.0, 3.0, 1.0) == doctest::Approx(1.38487).epsilon(1e-5));
}

TEST_CASE("gaussian_bits: symmetry and normalization") {
  for (double t : {0.0, 0.3, 1.0, 2.7, 7.0, 40.0}) {
    CHECK(gaussian_bits(1.25 + t, 1.25, 2.0) == gaussian_bits(1.25 - t, 1.25, 2.0));
  }
  double total = 0;
  for (int v = -1000; v <= 1000; ++v) total += gaussian_pmf(v, 0.0, 5.0);
  CHECK(std::abs(total - 1.0) < 1e-9);
  // floor and σ clamp
  CHECK(gaussian_bits(200, 0, 1) == doctest::Approx(16.0));
  CHECK(gaussian_pmf(0, 0, 1e-6) == gaussian_pmf(0, 0, kSigmaMin));
}

TEST_CASE("factorized_bits: zero-mean per-channel model") {
  Tensor<float> v({2, 3});
  for (Index i = 0; i < 6; ++i) v[i] = static_cast<float>(i - 2);
  Tensor<float> s({3});
  s[0] = 0.5f;
  s[1] = 1.0f;
  s[2] = 4.0f;
  const Tensor<float> bits = factorized_bits(v, s);
  for (Index i = 0; i < 6; ++i) {
    const double sigma = s[i % 3], x = v[i];
    const double p = phi((x + 0.5) / sigma) - phi((x - 0.5) / sigma);
    CHECK(bits[i] == doctest::Approx(-std::log2(p)).epsilon(1e-5));
  }
  Tensor<float> neg(v.shape());
  neg.array() = -v.array();
  CHECK(test::max_abs_diff(factorized_bits(neg, s), bits) == 0.0f);
}

TEST_CASE("likelihood_bits: values and gradients") {
  Rng rng(1);
  const Var<double> v(Tensor<double>::uniform({40}, rng, -6.0, 6.0), true);
  const Var<double> mu(Tensor<double>::uniform({40}, rng, -3.0, 3.0), true);
  const Var<double> sigma(Tensor<double>::uniform({40}, rng, 0.3, 4.0), true);
  const Tensor<double> bits = likelihood_bits(v, mu, sigma).value();
  for (Index i = 0; i < 40; ++i) CHECK(bits[i] == doctest::Approx(gaussian_bits(v.value()[i], mu.value()[i], sigma.value()[i])));
  auto loss = [&] { return test::project(likelihood_bits(v, mu, sigma)); };
  CHECK(test::gradient_error(loss, v) < 1e-6);
  CHECK(test::gradient_error(loss, mu) < 1e-6);
  CHECK(test::gradient_error(loss, sigma) < 1e-6);
}

TEST_CASE("quantize_pmf: exact total, no zero bins") {
  const auto f = quantize_pmf({0.5, 1e-12, 0.25, 0.25});
  CHECK(std::accumulate(f.begin(), f.end(), 0ull) == kCdfTotal);
  for (auto x : f) CHECK(x >= 1u);
  CHECK(f[0] > f[2]);
}

TEST_CASE("gaussian_cdf: window and escape") {
  const QuantizedCdf c = gaussian_cdf(2.4, 1.0);
  CHECK(c.escape);
  CHECK(c.lo == 2 - 9);
  CHECK(c.hi() == 2 + 9);
  CHECK(c.cdf.front() == 0u);
  CHECK(c.cdf.back() == kCdfTotal);
  const QuantizedCdf edge = gaussian_cdf(254.0, 3.0);
  CHECK(edge.hi() == kAlphabetRadius);
  CHECK(c.raw_bits() == 9);
  CHECK(c.cost_bits(2) == doctest::Approx(gaussian_bits(2, 2.4, 1.0)).epsilon(1e-3));
}

std::vector<std::int32_t> gaussian_symbols(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<std::int32_t> s(n);
  for (auto& x : s) x = static_cast<std::int32_t>(std::clamp(round_half_away(d(rng)), -255.0, 255.0));
  return s;
}

TEST_CASE("range coder: empty sequence") {
  const CdfProvider cdf = [](std::size_t) { return gaussian_cdf(0, 1); };
  const auto bytes = range_encode({}, cdf);
  CHECK(bytes.size() == 5);
  CHECK(range_decode(bytes, cdf, 0).empty());
}

TEST_CASE("range coder: Gaussian symbols round trip") {
  const auto symbols = gaussian_symbols(10000, 3.0, 42);
  const CdfProvider cdf = [](std::size_t) { return gaussian_cdf(0, 3); };
  const auto bytes = range_encode(symbols, cdf);
  CHECK(range_decode(bytes, cdf, symbols.size()) == symbols);
  double model = 0;
  const QuantizedCdf table = gaussian_cdf(0, 3);
  for (auto s : symbols) model += table.cost_bits(s);
  CHECK(8.0 * static_cast<double>(bytes.size()) <= model * 1.01 + 64 * 8);
}

TEST_CASE("range coder: uniform 256-symbol alphabet costs 8 bits per symbol") {
  const QuantizedCdf uniform = make_cdf(0, std::vector<double>(256, 1.0 / 256), false);
  const CdfProvider cdf = [&](std::size_t) { return uniform; };
  std::mt19937_64 rng(7);
  std::vector<std::int32_t> symbols(4096);
  for (auto& s : symbols) s = static_cast<std::int32_t>(rng() % 256);
  const auto bytes = range_encode(symbols, cdf);
  CHECK(std::abs(static_cast<long>(bytes.size()) - 4096) <= 16);
  CHECK(range_decode(bytes, cdf, symbols.size()) == symbols);
}

TEST_CASE("range coder: randomized tables and escapes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu(-20, 20), sigma(0.01, 30);
  const std::size_t n = 20000;
  std::vector<QuantizedCdf> tables(n);
  std::vector<std::int32_t> symbols(n);
  std::size_t escapes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tables[i] = gaussian_cdf(mu(rng), sigma(rng));
    // mostly in-window, sometimes far tails
    symbols[i] = i % 13 == 0 ? static_cast<std::int32_t>(rng() % 511) - 255 : gaussian_symbols(1, 1.0, rng())[0] + tables[i].lo +
                                                                                      tables[i].window_size() / 2;
    symbols[i] = std::clamp(symbols[i], -255, 255);
    escapes += symbols[i] < tables[i].lo || symbols[i] > tables[i].hi();
  }
  CHECK(escapes > 100);
  const CdfProvider cdf = [&](std::size_t i) { return tables[i]; };
  const auto bytes = range_encode(symbols, cdf);
  CHECK(range_decode(bytes, cdf, n) == symbols);
}

TEST_CASE("range coder: errors") {
  const CdfProvider cdf = [](std::size_t) { return gaussian_cdf(0, 2); };
  CHECK_THROWS_AS(range_encode({300}, cdf), EncodeError);
  const auto no_escape = make_cdf(-2, {0.2, 0.2, 0.2, 0.2, 0.2}, false);
  CHECK_THROWS_AS(range_encode({3}, [&](std::size_t) { return no_escape; }), EncodeError);

  const auto symbols = gaussian_symbols(2000, 2.0, 5);
  auto bytes = range_encode(symbols, cdf);
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  try {
    range_decode(truncated, cdf, symbols.size());
    FAIL("truncated payload decoded");
  } catch (const DecodeError& e) {
    CHECK(e.position() == truncated.size());
  }
  bytes[0] = 0x7F;
  CHECK_THROWS_AS(range_decode(bytes, cdf, symbols.size()), DecodeError);
}

}  // namespace
}  // namespace jdnd
