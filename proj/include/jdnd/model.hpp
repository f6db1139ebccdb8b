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

// The base codec (g_a, g_s, h_a, h_s and the hyper-latent prior) plus the
// optional denoising add-ons (latent refinement and prompt generator).

#ifndef JDND_MODEL_HPP_
#define JDND_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/config.hpp"
#include "jdnd/entropy.hpp"
#include "jdnd/latent_refine.hpp"
#include "jdnd/prompt.hpp"
#include "jdnd/swin.hpp"

namespace jdnd {

template <typename Scalar>
class Model {
 public:
  Model() = default;

  /// Base weights are drawn from `seed` and add-on weights from a separate
  /// stream, so the base initialization does not depend on add-on flags.
  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const Index stages = cfg_.stages();
    const Index k = cfg_.kernel;
    Index prev = 3;
    for (Index i = 0; i < stages; ++i) {
      const Index c = cfg_.channels[static_cast<std::size_t>(i)];
      enc_convs_.emplace_back(prev, c, k, 2, 1, rng);
      enc_blocks_.emplace_back(c, cfg_.depths[static_cast<std::size_t>(i)],
                               cfg_.heads[static_cast<std::size_t>(i)], cfg_.window, cfg_.mlp_ratio, rng);
      prev = c;
    }
    for (Index b = 0; b < stages; ++b) {
      const Index c = cfg_.decoder_channels(b);
      const Index next = b + 1 < stages ? cfg_.decoder_channels(b + 1) : 3;
      dec_blocks_.emplace_back(c, cfg_.decoder_depth(b), cfg_.decoder_heads(b), cfg_.window,
                               cfg_.mlp_ratio, rng);
      dec_convs_.emplace_back(c, next, k, 2, rng);
    }
    const Index m = cfg_.latent_channels();
    const Index hc = cfg_.hyper_channels;
    const Index hz = cfg_.hyper_latent_channels;
    ha_.emplace_back(m, hc, 3, 1, 1, rng);
    ha_.emplace_back(hc, hc, k, 2, 1, rng);
    ha_.emplace_back(hc, hz, k, 2, 1, rng);
    hs_up1_ = ConvTranspose2d<Scalar>(hz, hc, k, 2, rng);
    hs_up2_ = ConvTranspose2d<Scalar>(hc, hc, k, 2, rng);
    hs_out_ = Conv2d<Scalar>(hc, 2 * m, 3, 1, 1, rng);
    // softplus(0.5413) = 1: unit scale at init
    z_scale_ = make_parameter(Tensor<Scalar>(Shape{hz}, Scalar(0.5413)));

    Rng addon_rng(seed ^ 0x9E3779B97F4A7C15ull);
    if (cfg_.has_lrm()) lrm_ = LatentRefiner<Scalar>(m, cfg_.sft_hidden, cfg_.lrm, addon_rng);
    if (cfg_.has_prompts()) gp_ = PromptGenerator<Scalar>(cfg_, addon_rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

  /// g_a: [B,H,W,3] → [B,H/16,W/16,M] for the default four stages.
  Var<Scalar> analyze(const Var<Scalar>& x) const {
    check_image(x);
    Var<Scalar> f = x;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) f = enc_blocks_[i].forward(enc_convs_[i](f));
    return f;
  }

  /// g_s. Blocks with a prompt map in `prompts` run prompt-adapted; with no
  /// prompts this is the standard reconstruction path.
  Var<Scalar> synthesize(const Var<Scalar>& y, const PromptSet<Scalar>* prompts = nullptr) const {
    if (y.value().rank() != 4 || y.dim(3) != cfg_.latent_channels()) {
      throw ConfigError("synthesize expects [B,h,w," + std::to_string(cfg_.latent_channels()) +
                        "], got " + shape_string(y.shape()));
    }
    if (prompts) {
      for (Index t : prompts->targets) {
        if (t < 0 || t >= cfg_.stages()) throw AdapterError("prompt target block out of range");
      }
    }
    Var<Scalar> f = y;
    for (std::size_t b = 0; b < dec_blocks_.size(); ++b) {
      const Var<Scalar> p = prompts ? prompts->find(static_cast<Index>(b)) : Var<Scalar>();
      f = dec_convs_[b](dec_blocks_[b].forward(f, p));
    }
    return f;
  }

  /// h_a: y → z at a quarter of the latent resolution.
  Var<Scalar> hyper_analyze(const Var<Scalar>& y) const {
    Var<Scalar> f = gelu(ha_[0](y));
    f = gelu(ha_[1](f));
    return ha_[2](f);
  }

  /// h_s: ẑ → (μ, σ) with σ = max(softplus(·), σ_min).
  std::pair<Var<Scalar>, Var<Scalar>> hyper_synthesize(const Var<Scalar>& z) const {
    const Var<Scalar> f = hs_out_(gelu(hs_up2_(gelu(hs_up1_(z)))));
    const Index m = cfg_.latent_channels();
    return {slice_channels(f, 0, m),
            clamp_min(softplus(slice_channels(f, m, m)), static_cast<Scalar>(kSigmaMin))};
  }

  /// Per-channel scale of the factorized ẑ prior.
  Var<Scalar> z_scales() const {
    return clamp_min(softplus(z_scale_), static_cast<Scalar>(kSigmaMin));
  }

  /// ỹ = LRM(ŷ); identity when the model has no refinement module.
  Var<Scalar> refine(const Var<Scalar>& y) const { return cfg_.has_lrm() ? lrm_.forward(y) : y; }

  PromptSet<Scalar> generate_prompts(const Var<Scalar>& y) const {
    if (!cfg_.has_prompts()) return {};
    return gp_.generate(y);
  }

  /// Denoising reconstruction from a decoded latent.
  Var<Scalar> synthesize_denoised(const Var<Scalar>& y) const {
    const Var<Scalar> refined = refine(y);
    const PromptSet<Scalar> prompts = generate_prompts(refined);
    return synthesize(refined, prompts.empty() ? nullptr : &prompts);
  }

  const LatentRefiner<Scalar>& lrm() const { return lrm_; }
  LatentRefiner<Scalar>& lrm() { return lrm_; }
  const PromptGenerator<Scalar>& prompt_generator() const { return gp_; }
  const std::vector<SwinBlock<Scalar>>& decoder_blocks() const { return dec_blocks_; }

  /// g_a, g_s, h_a, h_s and the ẑ prior.
  NamedParams<Scalar> base_parameters() const {
    NamedParams<Scalar> out;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
      enc_convs_[i].parameters("g_a.conv" + std::to_string(i), out);
      enc_blocks_[i].parameters("g_a.stb" + std::to_string(i), out);
    }
    for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
      dec_blocks_[i].parameters("g_s.stb" + std::to_string(i), out);
      dec_convs_[i].parameters("g_s.deconv" + std::to_string(i), out);
    }
    for (std::size_t i = 0; i < ha_.size(); ++i) ha_[i].parameters("h_a.conv" + std::to_string(i), out);
    hs_up1_.parameters("h_s.deconv0", out);
    hs_up2_.parameters("h_s.deconv1", out);
    hs_out_.parameters("h_s.conv2", out);
    out.emplace_back("prior_z.scale", z_scale_);
    return out;
  }

  /// Parameters of the decoder-side base path: g_s, h_s and the ẑ prior.
  NamedParams<Scalar> base_decoder_parameters() const {
    NamedParams<Scalar> out;
    for (auto& p : base_parameters()) {
      if (p.first.rfind("g_s.", 0) == 0 || p.first.rfind("h_s.", 0) == 0 || p.first.rfind("prior_z.", 0) == 0) {
        out.push_back(p);
      }
    }
    return out;
  }

  NamedParams<Scalar> lrm_parameters() const {
    NamedParams<Scalar> out;
    if (cfg_.has_lrm()) lrm_.parameters("lrm", out);
    return out;
  }

  NamedParams<Scalar> prompt_parameters() const {
    NamedParams<Scalar> out;
    if (cfg_.has_prompts()) gp_.parameters("g_p", out);
    return out;
  }

  NamedParams<Scalar> addon_parameters() const {
    NamedParams<Scalar> out = lrm_parameters();
    for (auto& p : prompt_parameters()) out.push_back(p);
    return out;
  }

  NamedParams<Scalar> parameters() const {
    NamedParams<Scalar> out = base_parameters();
    for (auto& p : addon_parameters()) out.push_back(p);
    return out;
  }

 private:
  void check_image(const Var<Scalar>& x) const {
    if (x.value().rank() != 4 || x.dim(3) != 3) {
      throw ConfigError("expected an image batch [B,H,W,3], got " + shape_string(x.shape()));
    }
    const Index mult = cfg_.pad_multiple();
    if (x.dim(1) % mult || x.dim(2) % mult) {
      throw ConfigError("image size " + std::to_string(x.dim(1)) + "x" + std::to_string(x.dim(2)) +
                        " is not a multiple of " + std::to_string(mult) + "; pad first");
    }
  }

  ModelConfig cfg_;
  std::vector<Conv2d<Scalar>> enc_convs_;
  std::vector<SwinBlock<Scalar>> enc_blocks_;
  std::vector<SwinBlock<Scalar>> dec_blocks_;
  std::vector<ConvTranspose2d<Scalar>> dec_convs_;
  std::vector<Conv2d<Scalar>> ha_;
  ConvTranspose2d<Scalar> hs_up1_, hs_up2_;
  Conv2d<Scalar> hs_out_;
  Var<Scalar> z_scale_;
  LatentRefiner<Scalar> lrm_;
  PromptGenerator<Scalar> gp_;
};

using CodecModel = Model<float>;

/// FNV-1a over parameter names, shapes and raw bytes.
template <typename Scalar>
std::uint64_t parameter_hash(const NamedParams<Scalar>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, v] : params) {
    mix(name.data(), name.size());
    for (Index d : v.shape()) mix(&d, sizeof(d));
    mix(v.value().data(), static_cast<std::size_t>(v.size()) * sizeof(Scalar));
  }
  return h;
}

}  // namespace jdnd

#endif  // JDND_MODEL_HPP_
