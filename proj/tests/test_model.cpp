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


#include "doctest.h"
#include "jdnd/latent_refine.hpp"
#include "jdnd/model.hpp"
#include "jdnd/prompt.hpp"
#include "test_util.hpp"

namespace jdnd {
namespace {

using test::random_tensor;

TEST_CASE("sft: forced identity and zero scale") {
  Rng rng(1);
  const Var<float> f(random_tensor<float>({1, 4, 4, 8}, 2));
  SpatialFeatureTransform<float> t(8, 16, rng);
  t.set_identity();
  CHECK(test::bit_equal(sft(f, t).value(), f.value()));

  SpatialFeatureTransform<float> u(8, 16, rng);
  u.set_zero_scale();
  CHECK(test::bit_equal(sft(f, u).value(), u.beta(f).value()));
}

TEST_CASE("sft: gradient matches finite differences") {
  Rng rng(3);
  SpatialFeatureTransform<double> t(8, 6, rng);
  NamedParams<double> ps;
  t.parameters("sft", ps);
  std::uint64_t seed = 10;
  for (auto& [name, v] : ps) v.mutable_value() = random_tensor<double>(v.shape(), ++seed, 0.3);
  const Var<double> f(random_tensor<double>({1, 4, 4, 8}, 4), true);
  auto loss = [&] { return test::project(sft(f, t)); };
  CHECK(test::gradient_error(loss, f) < 1e-4);
  set_requires_grad(ps, true);
  for (const auto& [name, v] : ps) {
    CAPTURE(name);
    CHECK(test::gradient_error(loss, v) < 1e-4);
  }
}

TEST_CASE("lrm: identity at initialization") {
  for (LrmVariant variant : {LrmVariant::kNormal, LrmVariant::kLight}) {
    Rng rng(5);
    LatentRefiner<float> lrm(96, 32, variant, rng);
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Var<float> y(random_tensor<float>({1, 4, 4, 96}, 20 + s, 4.0f));
      CHECK(test::bit_equal(lrm_forward(y, lrm).value(), y.value()));
    }
  }
}

TEST_CASE("lrm: light variant uses 16-group convolutions") {
  Rng rng(6);
  LatentRefiner<float> normal(96, 32, LrmVariant::kNormal, rng);
  LatentRefiner<float> light(96, 32, LrmVariant::kLight, rng);
  NamedParams<float> pn, pl;
  normal.parameters("lrm", pn);
  light.parameters("lrm", pl);
  auto weights = [](const NamedParams<float>& ps, const std::string& name) {
    for (const auto& [n, v] : ps)
      if (n == name) return v.size();
    return Index{-1};
  };
  CHECK(weights(pn, "lrm.conv1.weight") == 9 * 96 * 96);
  CHECK(weights(pn, "lrm.conv1.weight") == 82944);
  CHECK(weights(pl, "lrm.conv1.weight") == 5184);
  CHECK(count_parameters(pl) < count_parameters(pn));
  CHECK_THROWS_AS(LatentRefiner<float>(40, 8, LrmVariant::kLight, rng), ConfigError);
}

TEST_CASE("lrm: gradient matches finite differences once trained away from zero") {
  Rng rng(7);
  LatentRefiner<double> lrm(16, 4, LrmVariant::kLight, rng);
  NamedParams<double> ps;
  lrm.parameters("lrm", ps);
  std::uint64_t seed = 40;
  for (auto& [name, v] : ps) v.mutable_value() = random_tensor<double>(v.shape(), ++seed, 0.2);
  const Var<double> y(random_tensor<double>({1, 4, 4, 16}, 8), true);
  CHECK(test::gradient_error([&] { return test::project(lrm_forward(y, lrm)); }, y) < 1e-4);
}

TEST_CASE("pixel_shuffle: sub-pixel layout") {
  Tensor<double> t({1, 1, 2, 8});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  const Tensor<double> out = pixel_shuffle(Var<double>(t), 2).value();
  REQUIRE(out.shape() == Shape{1, 2, 4, 2});
  // out(y, x, c) = in(y/2, x/2, ((y%2)*2 + x%2)*C + c)
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 4; ++x)
      for (Index c = 0; c < 2; ++c)
        CHECK(out.at({0, y, x, c}) == t.at({0, y / 2, x / 2, ((y % 2) * 2 + x % 2) * 2 + c}));
}

TEST_CASE("toy model shapes") {
  ModelConfig cfg;
  const CodecModel model(cfg, 1);
  Rng rng(2);
  const Var<float> x(Tensor<float>::uniform({1, 64, 64, 3}, rng, 0.0f, 1.0f));
  const Var<float> y = model.analyze(x);
  CHECK(y.shape() == Shape{1, 4, 4, 96});
  CHECK(model.hyper_analyze(y).shape() == Shape{1, 1, 1, 64});
  const auto [mu, sigma] = model.hyper_synthesize(model.hyper_analyze(y));
  CHECK(mu.shape() == y.shape());
  CHECK(sigma.value().array().minCoeff() >= 0.04f);
  CHECK(model.synthesize(y).shape() == x.shape());
  CHECK(model.synthesize_denoised(y).shape() == x.shape());

  const PromptSet<float> none;
  CHECK(test::bit_equal(model.synthesize(y, &none).value(), model.synthesize(y).value()));

  const PromptSet<float> prompts = model.generate_prompts(y);
  REQUIRE(prompts.maps.size() == 2);
  CHECK(prompts.targets == std::vector<Index>{2, 3});
  CHECK(prompts.maps[0].shape() == Shape{1, 8, 8, 48});
  CHECK(prompts.maps[1].shape() == Shape{1, 16, 16, 32});
  CHECK_THROWS_AS(model.analyze(Var<float>(Tensor<float>({1, 48, 64, 3}))), ConfigError);
}

TEST_CASE("prompts depend on the latent") {
  ModelConfig cfg;
  const CodecModel model(cfg, 1);
  const auto a = model.generate_prompts(Var<float>(random_tensor<float>({1, 4, 4, 96}, 1)));
  const auto b = model.generate_prompts(Var<float>(random_tensor<float>({1, 4, 4, 96}, 2)));
  for (std::size_t i = 0; i < a.maps.size(); ++i) CHECK(test::max_abs_diff(a.maps[i].value(), b.maps[i].value()) > 1e-3f);
}

TEST_CASE("prompt-heavy targets every decoder block") {
  ModelConfig cfg;
  cfg.prompt_targets = PromptTargets::kAll;
  cfg.prompt_convs = PromptConvs::kFull;
  const CodecModel model(cfg, 1);
  const auto prompts = model.generate_prompts(Var<float>(random_tensor<float>({1, 4, 4, 96}, 1)));
  REQUIRE(prompts.maps.size() == 4);
  for (Index b = 0; b < 4; ++b) {
    const Index side = b == 0 ? 2 : Index{4} << (b - 1);
    CHECK(prompts.find(b).shape() == Shape{1, side, side, cfg.decoder_channels(b)});
  }
  CHECK(model.synthesize(Var<float>(random_tensor<float>({1, 4, 4, 96}, 3)), &prompts).shape() == Shape{1, 64, 64, 3});
}

TEST_CASE("base initialization does not depend on add-on flags") {
  ModelConfig a, b;
  b.lrm = LrmVariant::kNone;
  b.prompt_targets = PromptTargets::kNone;
  CHECK(parameter_hash(CodecModel(a, 7).base_parameters()) == parameter_hash(CodecModel(b, 7).base_parameters()));
  CHECK(parameter_hash(CodecModel(a, 7).base_parameters()) != parameter_hash(CodecModel(a, 8).base_parameters()));
  CHECK(CodecModel(b, 7).addon_parameters().empty());
}

}  // namespace
}  // namespace jdnd
