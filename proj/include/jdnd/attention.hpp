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

// Window multi-head self-attention, Softmax(QKᵀ/√d + B)V, and its
// prompt-augmented form where keys and values are [F; P]W and queries stay FW.

#ifndef JDND_ATTENTION_HPP_
#define JDND_ATTENTION_HPP_

#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "jdnd/layers.hpp"
#include "jdnd/window.hpp"

namespace jdnd {

/// Raised when prompt tokens do not match what a prompt-adapted block needs.
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Projections and relative-position table of one attention layer.
/// Projections act on rows: Q = F·W_Qᵀ + b_Q (weights stored [out, in]).
/// Biases may be left undefined.
template <typename Scalar>
struct AttentionWeights {
  Var<Scalar> wq, wk, wv;
  Var<Scalar> bq, bk, bv;
  Var<Scalar> table;  // [(2w-1)², heads]; undefined means B = 0
  Index heads = 1;
  Index window = 1;

  Index channels() const { return wq.dim(0); }

  static AttentionWeights create(Index channels, Index heads, Index window, Rng& rng) {
    if (channels % heads) throw ConfigError("attention: heads must divide channels");
    AttentionWeights w;
    w.wq = make_parameter(truncated_normal<Scalar>({channels, channels}, rng, 0.02));
    w.wk = make_parameter(truncated_normal<Scalar>({channels, channels}, rng, 0.02));
    w.wv = make_parameter(truncated_normal<Scalar>({channels, channels}, rng, 0.02));
    w.bq = make_parameter(Tensor<Scalar>(Shape{channels}));
    w.bk = make_parameter(Tensor<Scalar>(Shape{channels}));
    w.bv = make_parameter(Tensor<Scalar>(Shape{channels}));
    const Index span = 2 * window - 1;
    w.table = make_parameter(truncated_normal<Scalar>({span * span, heads}, rng, 0.02));
    w.heads = heads;
    w.window = window;
    return w;
  }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    out.emplace_back(prefix + ".wq", wq);
    out.emplace_back(prefix + ".bq", bq);
    out.emplace_back(prefix + ".wk", wk);
    out.emplace_back(prefix + ".bk", bk);
    out.emplace_back(prefix + ".wv", wv);
    out.emplace_back(prefix + ".bv", bv);
    out.emplace_back(prefix + ".relative_bias", table);
  }
};

/// B as a [heads, N, N] tensor gathered from the relative-offset table.
template <typename Scalar>
Var<Scalar> relative_bias(const AttentionWeights<Scalar>& w) {
  if (!w.table.defined()) return {};
  const Index n = w.window * w.window;
  static thread_local std::map<std::pair<Index, Index>, IndexMap> cache;
  auto key = std::make_pair(w.window, w.heads);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto rel = relative_position_index(w.window);
    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(w.heads * n * n));
    for (Index h = 0; h < w.heads; ++h)
      for (Index i = 0; i < n * n; ++i)
        (*map)[static_cast<std::size_t>(h * n * n + i)] = rel[static_cast<std::size_t>(i)] * w.heads + h;
    it = cache.emplace(key, IndexMap(map)).first;
  }
  return gather(w.table, it->second, {w.heads, n, n});
}

/// Splits a half-resolution prompt map [B, h/2, w/2, C] into windows that
/// line up with window_partition(F, window, shift): window/2 and shift/2 on
/// the prompt grid give N/4 prompt tokens per token window, same window order.
template <typename Scalar>
WindowedTokens<Scalar> partition_prompts(const Var<Scalar>& prompt_map, Index window, Index shift) {
  if (window % 2) throw ConfigError("prompting needs an even window size, got " + std::to_string(window));
  if (shift % 2) throw ConfigError("prompting needs an even shift, got " + std::to_string(shift));
  return window_partition(prompt_map, window / 2, shift / 2);
}

/// Window self-attention over tokens [Bw, N, C]; returns [Bw, N, C].
template <typename Scalar>
Var<Scalar> wmsa(const Var<Scalar>& tokens, const AttentionWeights<Scalar>& w,
                 std::shared_ptr<const Tensor<Scalar>> mask = nullptr) {
  const Var<Scalar> q = linear(tokens, w.wq, w.bq);
  const Var<Scalar> k = linear(tokens, w.wk, w.bk);
  const Var<Scalar> v = linear(tokens, w.wv, w.bv);
  Var<Scalar> bias;
  if (w.table.defined() && w.window * w.window == tokens.dim(1)) bias = relative_bias(w);
  return attention(q, k, v, bias, std::move(mask), w.heads);
}

/// Attention whose keys/values are [F; P]: the token rows followed by the
/// prompt rows of each window. Queries come from F only and prompt columns
/// get zero positional bias. No constraint on the prompt count.
template <typename Scalar>
Var<Scalar> augmented_attention(const Var<Scalar>& tokens, const Var<Scalar>& prompts,
                                const AttentionWeights<Scalar>& w,
                                std::shared_ptr<const Tensor<Scalar>> mask = nullptr) {
  if (prompts.value().rank() != 3 || prompts.dim(0) != tokens.dim(0) ||
      prompts.dim(2) != tokens.dim(2)) {
    throw AdapterError("prompt tokens " + shape_string(prompts.shape()) +
                       " do not match token windows " + shape_string(tokens.shape()));
  }
  const Var<Scalar> q = linear(tokens, w.wq, w.bq);
  const Var<Scalar> k = concat_tokens(linear(tokens, w.wk, w.bk), linear(prompts, w.wk, w.bk));
  const Var<Scalar> v = concat_tokens(linear(tokens, w.wv, w.bv), linear(prompts, w.wv, w.bv));
  Var<Scalar> bias;
  if (w.table.defined() && w.window * w.window == tokens.dim(1)) bias = relative_bias(w);
  return attention(q, k, v, bias, std::move(mask), w.heads);
}

/// Prompt-adapted attention: every window of N tokens attends over N + N/4
/// keys/values. An undefined `prompts` reduces to wmsa.
template <typename Scalar>
Var<Scalar> pstb_attention(const Var<Scalar>& tokens, const Var<Scalar>& prompts,
                           const AttentionWeights<Scalar>& w,
                           std::shared_ptr<const Tensor<Scalar>> mask = nullptr) {
  if (!prompts.defined()) return wmsa(tokens, w, std::move(mask));
  const Index n = tokens.dim(1);
  if (n % 4 || prompts.value().rank() != 3 || prompts.dim(1) != n / 4) {
    throw AdapterError("each window of " + std::to_string(n) + " tokens needs exactly " +
                       std::to_string(n / 4) + " prompt tokens, got shape " +
                       shape_string(prompts.shape()));
  }
  return augmented_attention(tokens, prompts, w, std::move(mask));
}

}  // namespace jdnd

#endif  // JDND_ATTENTION_HPP_
