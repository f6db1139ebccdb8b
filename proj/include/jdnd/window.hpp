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

// Shifted-window partitioning of NHWC feature maps into token groups.

#ifndef JDND_WINDOW_HPP_
#define JDND_WINDOW_HPP_

#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "jdnd/ops.hpp"

namespace jdnd {

/// Token groups produced by window_partition, [B*nW, N, C] with N = window².
/// Windows are ordered batch-major then row-major over the window grid;
/// tokens are row-major within a window.
template <typename Scalar>
struct WindowedTokens {
  Var<Scalar> tokens;
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  Index window = 0;
  Index shift = 0;

  Index windows_per_image() const { return (height / window) * (width / window); }
  Index tokens_per_window() const { return window * window; }
};

/// Source row of every output row for a cyclic shift by -shift followed by
/// the partition. Cached per geometry.
inline IndexMap window_partition_map(Index batch, Index height, Index width, Index window,
                                     Index shift) {
  if (window < 1 || height % window || width % window) {
    throw ConfigError("window_partition: " + std::to_string(height) + "x" + std::to_string(width) +
                      " map is not divisible by window " + std::to_string(window));
  }
  if (shift < 0 || shift >= window) {
    throw ConfigError("window_partition: shift must be in [0, window)");
  }
  static std::mutex mu;
  static std::map<std::tuple<Index, Index, Index, Index, Index>, IndexMap> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(batch, height, width, window, shift);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(batch * height * width));
  const Index wr = height / window, wc = width / window;
  std::size_t o = 0;
  for (Index b = 0; b < batch; ++b)
    for (Index r = 0; r < wr; ++r)
      for (Index c = 0; c < wc; ++c)
        for (Index i = 0; i < window; ++i)
          for (Index j = 0; j < window; ++j) {
            const Index y = (r * window + i + shift) % height;
            const Index x = (c * window + j + shift) % width;
            (*map)[o++] = (b * height + y) * width + x;
          }
  IndexMap result = map;
  cache.emplace(key, result);
  return result;
}

/// Inverse permutation of window_partition_map.
inline IndexMap window_reverse_map(Index batch, Index height, Index width, Index window, Index shift) {
  static std::mutex mu;
  static std::map<std::tuple<Index, Index, Index, Index, Index>, IndexMap> cache;
  IndexMap fwd = window_partition_map(batch, height, width, window, shift);
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(batch, height, width, window, shift);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto inv = std::make_shared<std::vector<Index>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[static_cast<std::size_t>((*fwd)[i])] = static_cast<Index>(i);
  IndexMap result = inv;
  cache.emplace(key, result);
  return result;
}

/// f [B,h,w,C] -> windows of w_s×w_s tokens after a cyclic shift by -s.
template <typename Scalar>
WindowedTokens<Scalar> window_partition(const Var<Scalar>& f, Index window, Index shift) {
  if (f.value().rank() != 4) throw ConfigError("window_partition: expects [B,h,w,C]");
  const Index batch = f.dim(0), h = f.dim(1), w = f.dim(2), c = f.dim(3);
  auto map = window_partition_map(batch, h, w, window, shift);
  WindowedTokens<Scalar> out;
  out.tokens = gather_rows(f, map, {batch * (h / window) * (w / window), window * window, c});
  out.batch = batch;
  out.height = h;
  out.width = w;
  out.window = window;
  out.shift = shift;
  return out;
}

/// Exact inverse of window_partition, including the shift.
template <typename Scalar>
Var<Scalar> window_reverse(const WindowedTokens<Scalar>& t) {
  const Index c = t.tokens.value().cols();
  if (t.tokens.size() != t.batch * t.height * t.width * c) {
    throw ConfigError("window_reverse: token count does not match the origin grid");
  }
  auto map = window_reverse_map(t.batch, t.height, t.width, t.window, t.shift);
  return gather_rows(t.tokens, map, {t.batch, t.height, t.width, c});
}

/// Swin region labels of the shifted map: positions that were not adjacent
/// before the cyclic shift get different labels.
inline std::vector<int> shifted_region_labels(Index height, Index width, Index window, Index shift) {
  std::vector<int> labels(static_cast<std::size_t>(height * width));
  auto band = [&](Index v, Index n) { return v < n - window ? 0 : (v < n - shift ? 1 : 2); };
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) labels[static_cast<std::size_t>(y * width + x)] = band(y, height) * 3 + band(x, width);
  return labels;
}

/// Additive attention mask [nW, N, N (+ N/4 prompt columns)] for a shifted
/// layer; nullptr when shift is 0. Prompt labels come from the half-size
/// grid with half-size window and shift, so they line up with the tokens.
template <typename Scalar>
std::shared_ptr<const Tensor<Scalar>> shifted_window_mask(Index height, Index width, Index window,
                                                          Index shift, bool with_prompts) {
  if (shift == 0) return nullptr;
  const Index n = window * window;
  const Index wr = height / window, wc = width / window;
  const auto labels = shifted_region_labels(height, width, window, shift);
  std::vector<int> plabels;
  Index pw = 0, np = 0;
  if (with_prompts) {
    pw = window / 2;
    np = pw * pw;
    plabels = shifted_region_labels(height / 2, width / 2, pw, shift / 2);
  }
  const Index l = n + np;
  auto mask = std::make_shared<Tensor<Scalar>>(Shape{wr * wc, n, l});
  constexpr Scalar kBlocked = Scalar(-100);
  for (Index r = 0; r < wr; ++r)
    for (Index c = 0; c < wc; ++c) {
      Scalar* m = mask->data() + (r * wc + c) * n * l;
      for (Index i = 0; i < n; ++i) {
        const int li = labels[static_cast<std::size_t>((r * window + i / window) * width + c * window + i % window)];
        for (Index j = 0; j < n; ++j) {
          const int lj = labels[static_cast<std::size_t>((r * window + j / window) * width + c * window + j % window)];
          m[i * l + j] = li == lj ? Scalar(0) : kBlocked;
        }
        for (Index j = 0; j < np; ++j) {
          const int lj = plabels[static_cast<std::size_t>((r * pw + j / pw) * (width / 2) + c * pw + j % pw)];
          m[i * l + n + j] = li == lj ? Scalar(0) : kBlocked;
        }
      }
    }
  return mask;
}

/// Index into a (2w-1)² relative-offset table for every (query, key) token
/// pair of a w×w window.
inline std::vector<Index> relative_position_index(Index window) {
  const Index n = window * window, span = 2 * window - 1;
  std::vector<Index> idx(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const Index dr = i / window - j / window + window - 1;
      const Index dc = i % window - j % window + window - 1;
      idx[static_cast<std::size_t>(i * n + j)] = dr * span + dc;
    }
  return idx;
}

}  // namespace jdnd

#endif  // JDND_WINDOW_HPP_
