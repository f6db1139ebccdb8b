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

// Instance-specific prompt generation from the (refined) latent.

#ifndef JDND_PROMPT_HPP_
#define JDND_PROMPT_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "jdnd/attention.hpp"
#include "jdnd/config.hpp"

namespace jdnd {

/// One half-resolution prompt map per targeted decoder block.
template <typename Scalar>
struct PromptSet {
  std::vector<Index> targets;
  std::vector<Var<Scalar>> maps;

  bool empty() const { return maps.empty(); }
  /// Map for decoder block `block`, undefined if the block is not targeted.
  Var<Scalar> find(Index block) const {
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i] == block) return maps[i];
    return {};
  }
};

/// Rearranges [B,H,W,r²C] into [B,rH,rW,C]; sub-pixel (i,j) reads channel
/// block i*r+j.
template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& x, Index r) {
  const Index batch = x.dim(0), h = x.dim(1), w = x.dim(2), cc = x.dim(3);
  if (cc % (r * r)) throw ConfigError("pixel_shuffle: channels not divisible by r²");
  const Index c = cc / (r * r);
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(batch * h * w * r * r));
  std::size_t o = 0;
  for (Index b = 0; b < batch; ++b)
    for (Index y = 0; y < h * r; ++y)
      for (Index xx = 0; xx < w * r; ++xx) {
        const Index src_pixel = (b * h + y / r) * w + xx / r;
        (*map)[o++] = src_pixel * r * r + (y % r) * r + (xx % r);
      }
  const Var<Scalar> rows = reshape(x, {batch * h * w * r * r, c});
  return gather_rows(rows, IndexMap(map), {batch, h * r, w * r, c});
}

/// Prompt generator: a 3×3 (group) conv stem on the latent, a trunk of
/// (group) conv + pixel-shuffle ×2 upsampling steps, and one 3×3 head per
/// targeted decoder block. Decoder block b runs at latent size × 2^b, so its
/// prompt map (half that) is read from trunk level b-1; block 0 uses a
/// stride-2 head on the stem.
template <typename Scalar>
class PromptGenerator {
 public:
  PromptGenerator() = default;
  PromptGenerator(const ModelConfig& cfg, Rng& rng) : targets_(cfg.prompt_target_blocks()) {
    if (targets_.empty()) throw ConfigError("prompt generator without targets");
    const Index groups = cfg.prompt_convs == PromptConvs::kGrouped16 ? cfg.prompt_groups : 1;
    const Index hidden = cfg.prompt_hidden;
    const Index m = cfg.latent_channels();
    if (m % groups || hidden % groups) {
      throw ConfigError("prompt generator channels not divisible by " + std::to_string(groups) +
                        " groups");
    }
    stem_ = Conv2d<Scalar>(m, hidden, 3, 1, groups, rng);
    const Index levels = *std::max_element(targets_.begin(), targets_.end()) - 1;
    for (Index i = 0; i < levels; ++i) ups_.emplace_back(hidden, 4 * hidden, 3, 1, groups, rng);
    for (Index b : targets_) {
      const Index c = cfg.decoder_channels(b);
      if (c % groups) {
        throw ConfigError("prompt target channels " + std::to_string(c) + " not divisible by " +
                          std::to_string(groups) + " groups");
      }
      heads_.emplace_back(hidden, c, 3, b == 0 ? 2 : 1, groups, rng, 0.5);
    }
  }

  PromptSet<Scalar> generate(const Var<Scalar>& latent) const {
    std::vector<Var<Scalar>> trunk{gelu(stem_(latent))};
    for (const auto& up : ups_) trunk.push_back(gelu(pixel_shuffle(up(trunk.back()), 2)));
    PromptSet<Scalar> out;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const Index level = std::max<Index>(targets_[i] - 1, 0);
      out.targets.push_back(targets_[i]);
      out.maps.push_back(heads_[i](trunk[static_cast<std::size_t>(level)]));
    }
    return out;
  }

  const std::vector<Index>& targets() const { return targets_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    stem_.parameters(prefix + ".stem", out);
    for (std::size_t i = 0; i < ups_.size(); ++i) ups_[i].parameters(prefix + ".up" + std::to_string(i), out);
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      heads_[i].parameters(prefix + ".head" + std::to_string(targets_[i]), out);
    }
  }

 private:
  std::vector<Index> targets_;
  Conv2d<Scalar> stem_;
  std::vector<Conv2d<Scalar>> ups_;
  std::vector<Conv2d<Scalar>> heads_;
};

template <typename Scalar>
PromptSet<Scalar> generate_prompts(const Var<Scalar>& latent, const PromptGenerator<Scalar>& gp) {
  return gp.generate(latent);
}

}  // namespace jdnd

#endif  // JDND_PROMPT_HPP_
