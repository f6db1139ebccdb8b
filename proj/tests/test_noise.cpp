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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "jdnd/image_io.hpp"
#include "jdnd/noise.hpp"
#include "test_util.hpp"

namespace jdnd {
namespace {

/// Sample variance of the pre-clip noise on a constant image, with the
/// 3-standard-error band of a Gaussian variance estimate.
void check_variance(float level, double a, double b, Index n) {
  const Index side = static_cast<Index>(std::sqrt(static_cast<double>(n) / 3.0)) + 1;
  const Tensor<float> x({side, side, 3}, level);
  Tensor<float> pre;
  add_noise(x, {a, b, 17}, &pre);
  const auto d = (pre.array() - x.array()).cast<double>();
  const double mean = d.mean();
  const double var = (d - mean).square().sum() / static_cast<double>(d.size() - 1);
  const double expected = a * level + b;
  const double se = expected * std::sqrt(2.0 / static_cast<double>(d.size() - 1));
  CHECK(std::abs(var - expected) < 3 * se);
  CHECK(std::abs(mean) < 3 * std::sqrt(expected / static_cast<double>(d.size())));
}

TEST_CASE("add_noise: zero parameters leave the image unchanged") {
  const Tensor<float> x = synthetic_image(32, 1);
  CHECK(test::bit_equal(add_noise(x, {0, 0, 5}), x));
}

TEST_CASE("add_noise: variance oracles") {
  check_variance(0.0f, 0.0, 0.01, 100000);
  check_variance(0.5f, 0.02, 0.001, 100000);
}

TEST_CASE("add_noise: clipping, determinism, bad parameters") {
  const Tensor<float> x = synthetic_image(32, 2);
  const Tensor<float> z = add_noise(x, {0.05, 0.01, 3});
  CHECK(z.array().minCoeff() >= 0.0f);
  CHECK(z.array().maxCoeff() <= 1.0f);
  CHECK(test::bit_equal(z, add_noise(x, {0.05, 0.01, 3})));
  CHECK_FALSE(test::bit_equal(z, add_noise(x, {0.05, 0.01, 4})));
  CHECK_THROWS_AS(add_noise(x, {-0.1, 0.0, 1}), ParameterError);
  CHECK_THROWS_AS(add_noise(x, {0.0, std::nan(""), 1}), ParameterError);
}

TEST_CASE("synthetic images are deterministic and in range") {
  const Tensor<float> a = synthetic_image(48, 9);
  CHECK(a.shape() == Shape{48, 48, 3});
  CHECK(test::bit_equal(a, synthetic_image(48, 9)));
  CHECK_FALSE(test::bit_equal(a, synthetic_image(48, 10)));
  CHECK(a.array().minCoeff() >= 0.0f);
  CHECK(a.array().maxCoeff() <= 1.0f);
  const auto many = synthetic_images(3, 16, 4);
  CHECK(many.size() == 3);
  CHECK(test::bit_equal(load_source(many[1].name), many[1].image));
}

TEST_CASE("make_pairs: manifest and regeneration") {
  const std::vector<ImageSource> one = {{"synthetic:64:5", synthetic_image(64, 5)}};
  const PairSet set = make_pairs(one, {0.01, 0.0005, 77}, 32, 4);
  REQUIRE(set.size() == 4);
  std::vector<std::uint64_t> seeds;
  for (const auto& r : set.records) {
    CHECK(r.patch == 32);
    CHECK(r.y + 32 <= 64);
    seeds.push_back(r.seed);
  }
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::unique(seeds.begin(), seeds.end()) == seeds.end());

  const std::string dir = test::temp_dir("pairs");
  write_manifest(set.records, dir + "/m.jsonl");
  const PairSet again = regenerate(read_manifest(dir + "/m.jsonl"));
  REQUIRE(again.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(test::bit_equal(again.clean[i], set.clean[i]));
    CHECK(test::bit_equal(again.noisy[i], set.noisy[i]));
  }
  CHECK_THROWS_AS(make_pairs(one, {0.01, 0.0005, 1}, 65, 1), ConfigError);
  CHECK_THROWS_AS(make_pairs(dir + "/nothing", {0.01, 0.0005, 1}, 16, 1), IoError);
}

TEST_CASE("make_pairs: noise is zero-mean before clipping") {
  // mid-grey source keeps clipping negligible
  const std::vector<ImageSource> grey = {{"grey", Tensor<float>({128, 128, 3}, 0.5f)}};
  const PairSet set = make_pairs(grey, {0.0, 0.0004, 5}, 128, 1);
  const auto d = (set.noisy[0].array() - set.clean[0].array()).cast<double>();
  CHECK(std::abs(d.mean()) < 3 * std::sqrt(0.0004 / static_cast<double>(d.size())));
}

TEST_CASE("load_image_dir: reads images in name order and skips others") {
  const std::string dir = test::temp_dir("imgdir");
  write_image(synthetic_image(16, 1), dir + "/b.png");
  write_image(synthetic_image(16, 2), dir + "/a.ppm");
  {
    std::ofstream bad(dir + "/c.png");
    bad << "garbage";
  }
  const auto srcs = load_image_dir(dir);
  REQUIRE(srcs.size() == 2);
  CHECK(std::filesystem::path(srcs[0].name).filename() == "a.ppm");
  const PairSet set = make_pairs(dir, {0.01, 0.0005, 1}, 8, 3);
  CHECK(set.size() == 3);
}

}  // namespace
}  // namespace jdnd
