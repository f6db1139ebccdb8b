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

#ifndef JDND_SWIN_HPP_
#define JDND_SWIN_HPP_

#include <string>
#include <vector>

#include "jdnd/attention.hpp"

namespace jdnd {

/// One Swin layer: x + Proj(W-MSA(LN(x))), then x + MLP(LN(x)).
/// When a prompt map is given the attention is prompt-augmented.
template <typename Scalar>
class SwinLayer {
 public:
  SwinLayer() = default;
  SwinLayer(Index channels, Index heads, Index window, Index shift, Index mlp_hidden, Rng& rng)
      : norm1_(channels),
        attn_(AttentionWeights<Scalar>::create(channels, heads, window, rng)),
        proj_(channels, channels, rng),
        norm2_(channels),
        fc1_(channels, mlp_hidden, rng),
        fc2_(mlp_hidden, channels, rng),
        window_(window),
        shift_(shift) {}

  /// Shift actually used on an h×w map: none when a single window covers it.
  Index effective_shift(Index height, Index width) const {
    return std::min(height, width) <= window_ ? 0 : shift_;
  }

  Var<Scalar> forward(const Var<Scalar>& x, const Var<Scalar>& prompt_map = {}) const {
    const Index batch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const Index shift = effective_shift(h, w);
    if (prompt_map.defined() &&
        (prompt_map.value().rank() != 4 || prompt_map.dim(0) != batch ||
         prompt_map.dim(1) * 2 != h || prompt_map.dim(2) * 2 != w ||
         prompt_map.dim(3) != x.dim(3))) {
      throw AdapterError("prompt map " + shape_string(prompt_map.shape()) +
                         " does not fit block input " + shape_string(x.shape()));
    }
    WindowedTokens<Scalar> win = window_partition(norm1_(x), window_, shift);
    auto mask = shifted_window_mask<Scalar>(h, w, window_, shift, prompt_map.defined());
    Var<Scalar> attended;
    if (prompt_map.defined()) {
      const auto prompts = partition_prompts(prompt_map, window_, shift);
      attended = pstb_attention(win.tokens, prompts.tokens, attn_, mask);
    } else {
      attended = wmsa(win.tokens, attn_, mask);
    }
    win.tokens = proj_(attended);
    Var<Scalar> y = x + window_reverse(win);
    return y + fc2_(gelu(fc1_(norm2_(y))));
  }

  /// Zeroes the projections that close both residual branches.
  void zero_residual_outputs() {
    for (Var<Scalar>* v : {&proj_.weight(), &proj_.bias(), &fc2_.weight(), &fc2_.bias()}) {
      v->mutable_value().array().setZero();
    }
  }

  const AttentionWeights<Scalar>& attention_weights() const { return attn_; }
  Index window() const { return window_; }
  Index shift() const { return shift_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    norm1_.parameters(prefix + ".norm1", out);
    attn_.parameters(prefix + ".attn", out);
    proj_.parameters(prefix + ".proj", out);
    norm2_.parameters(prefix + ".norm2", out);
    fc1_.parameters(prefix + ".fc1", out);
    fc2_.parameters(prefix + ".fc2", out);
  }

 private:
  LayerNorm<Scalar> norm1_;
  AttentionWeights<Scalar> attn_;
  Linear<Scalar> proj_;
  LayerNorm<Scalar> norm2_;
  Linear<Scalar> fc1_, fc2_;
  Index window_ = 1;
  Index shift_ = 0;
};

/// Swin-Transformer block: `depth` layers alternating shift 0 and window/2.
/// Given a prompt map it acts as the prompt-adapted block, every layer
/// reading the same map.
template <typename Scalar>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(Index channels, Index depth, Index heads, Index window, Index mlp_ratio, Rng& rng)
      : channels_(channels) {
    for (Index i = 0; i < depth; ++i) {
      layers_.emplace_back(channels, heads, window, i % 2 ? window / 2 : 0, channels * mlp_ratio, rng);
    }
  }

  Var<Scalar> forward(const Var<Scalar>& x, const Var<Scalar>& prompt_map = {}) const {
    if (x.value().rank() != 4 || x.dim(3) != channels_) {
      throw ConfigError("swin block expects [B,h,w," + std::to_string(channels_) + "], got " +
                        shape_string(x.shape()));
    }
    Var<Scalar> y = x;
    for (const auto& layer : layers_) y = layer.forward(y, prompt_map);
    return y;
  }

  void zero_residual_outputs() {
    for (auto& layer : layers_) layer.zero_residual_outputs();
  }

  Index depth() const { return static_cast<Index>(layers_.size()); }
  Index channels() const { return channels_; }
  const std::vector<SwinLayer<Scalar>>& layers() const { return layers_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].parameters(prefix + ".layer" + std::to_string(i), out);
    }
  }

 private:
  Index channels_ = 0;
  std::vector<SwinLayer<Scalar>> layers_;
};

/// Plain block forward.
template <typename Scalar>
Var<Scalar> stb_forward(const Var<Scalar>& f, const SwinBlock<Scalar>& block) {
  return block.forward(f);
}

/// Prompt-adapted block forward; an undefined map gives stb_forward.
template <typename Scalar>
Var<Scalar> pstb_forward(const Var<Scalar>& f, const Var<Scalar>& prompt_map,
                         const SwinBlock<Scalar>& block) {
  return block.forward(f, prompt_map);
}

}  // namespace jdnd

#endif  // JDND_SWIN_HPP_
