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
#include <vector>

#include "doctest.h"
#include "jdnd/attention.hpp"
#include "jdnd/swin.hpp"
#include "test_util.hpp"

namespace jdnd {
namespace {

using test::random_tensor;

/// [1, h, w, 1] map whose value is the flat position.
Var<double> position_map(Index h, Index w) {
  Tensor<double> t({1, h, w, 1});
  for (Index i = 0; i < h * w; ++i) t[i] = static_cast<double>(i);
  return Var<double>(t);
}

TEST_CASE("window_partition: single window") {
  const auto win = window_partition(position_map(4, 4), 4, 0);
  CHECK(win.tokens.shape() == Shape{1, 16, 1});
  for (Index i = 0; i < 16; ++i) CHECK(win.tokens.value()[i] == i);
}

TEST_CASE("window_partition: 8x8 index map against brute force") {
  const auto win = window_partition(position_map(8, 8), 4, 0);
  REQUIRE(win.tokens.shape() == Shape{4, 16, 1});
  for (Index r = 0; r < 8; ++r)
    for (Index c = 0; c < 8; ++c) {
      const Index window = (r / 4) * 2 + c / 4;
      const Index slot = (r % 4) * 4 + c % 4;
      CHECK(win.tokens.value().at({window, slot, 0}) == r * 8 + c);
    }
  const Var<double> back = window_reverse(win);
  for (Index i = 0; i < 64; ++i) CHECK(back.value()[i] == i);
}

TEST_CASE("window_partition: shifted map against brute force") {
  // shifted position p reads original (p + s) mod h
  const Index h = 8, s = 2;
  const auto win = window_partition(position_map(h, h), 4, s);
  for (Index p = 0; p < h; ++p)
    for (Index q = 0; q < h; ++q) {
      const Index window = (p / 4) * 2 + q / 4, slot = (p % 4) * 4 + q % 4;
      CHECK(win.tokens.value().at({window, slot, 0}) == ((p + s) % h) * h + (q + s) % h);
    }
}

TEST_CASE("window_reverse: round trips") {
  for (Index shift : {0, 1, 2, 3}) {
    const Var<double> f(random_tensor<double>({2, 8, 12, 3}, 7 + shift));
    const Var<double> back = window_reverse(window_partition(f, 4, shift));
    CHECK(test::max_abs_diff(back.value(), f.value()) == 0.0);
  }
  const Var<double> zero(Tensor<double>({1, 8, 8, 2}));
  CHECK(window_reverse(window_partition(zero, 4, 2)).value().array().abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(window_partition(zero, 3, 0), ConfigError);
  CHECK_THROWS_AS(window_partition(zero, 4, 4), ConfigError);
}

TEST_CASE("partition_prompts: quarter-density prompts line up with token windows") {
  const Index h = 8, ws = 4;
  for (Index shift : {0, 2}) {
    const auto tokens = window_partition(position_map(h, h), ws, shift);
    const auto prompts = partition_prompts(position_map(h / 2, h / 2), ws, shift);
    REQUIRE(prompts.tokens.shape() == Shape{4, 4, 1});
    for (Index w = 0; w < 4; ++w) {
      // every prompt's full-resolution footprint lies inside its token window
      std::vector<Index> window_rows, window_cols;
      for (Index t = 0; t < 16; ++t) {
        const auto pos = static_cast<Index>(tokens.tokens.value().at({w, t, 0}));
        window_rows.push_back(pos / h);
        window_cols.push_back(pos % h);
      }
      for (Index p = 0; p < 4; ++p) {
        const auto pos = static_cast<Index>(prompts.tokens.value().at({w, p, 0}));
        const Index r = 2 * (pos / (h / 2)), c = 2 * (pos % (h / 2));
        bool inside = false;
        for (std::size_t t = 0; t < window_rows.size(); ++t) inside = inside || (window_rows[t] == r && window_cols[t] == c);
        CHECK(inside);
      }
    }
  }
  // single window: all prompts in it
  const auto one = partition_prompts(position_map(2, 2), 4, 0);
  CHECK(one.tokens.shape() == Shape{1, 4, 1});
}

AttentionWeights<double> scalar_weights(double wq, double wk, double wv) {
  AttentionWeights<double> w;
  w.wq = Var<double>(Tensor<double>({1, 1}, wq));
  w.wk = Var<double>(Tensor<double>({1, 1}, wk));
  w.wv = Var<double>(Tensor<double>({1, 1}, wv));
  w.heads = 1;
  w.window = 1;
  return w;
}

Var<double> column(std::vector<double> v) {
  Tensor<double> t({1, static_cast<Index>(v.size()), 1});
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<Index>(i)] = v[i];
  return Var<double>(t);
}

TEST_CASE("wmsa: single token returns V") {
  const auto w = scalar_weights(0.3, -1.2, 2.5);
  const Var<double> out = wmsa(column({1.7}), w);
  CHECK(out.value()[0] == doctest::Approx(2.5 * 1.7).epsilon(1e-15));
}

TEST_CASE("wmsa: zero queries give uniform attention") {
  Rng rng(3);
  auto w = AttentionWeights<double>::create(8, 2, 4, rng);
  w.wq.mutable_value().array().setZero();
  w.table = Var<double>();
  const Var<double> f(random_tensor<double>({1, 16, 8}, 11));
  const Var<double> out = wmsa(f, w);
  const Var<double> v = linear(f, w.wv, w.bv);
  for (Index c = 0; c < 8; ++c) {
    double mean = 0;
    for (Index n = 0; n < 16; ++n) mean += v.value().at({0, n, c}) / 16;
    for (Index n = 0; n < 16; ++n) CHECK(out.value().at({0, n, c}) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("wmsa: two-token scalar oracle") {
  // F = [1, 2], W = 1: logits [[1, 2], [2, 4]]
  const Var<double> out = wmsa(column({1, 2}), scalar_weights(1, 1, 1));
  const double r0 = (std::exp(1.0) * 1 + std::exp(2.0) * 2) / (std::exp(1.0) + std::exp(2.0));
  const double r1 = (std::exp(2.0) * 1 + std::exp(4.0) * 2) / (std::exp(2.0) + std::exp(4.0));
  CHECK(out.value()[0] == doctest::Approx(r0).epsilon(1e-14));
  CHECK(out.value()[1] == doctest::Approx(r1).epsilon(1e-14));
}

TEST_CASE("augmented attention: 2x3 logit oracle") {
  // F = [1, 2], P = [3]: keys/values [1, 2, 3], logits F_i·[1, 2, 3]
  const Var<double> out = augmented_attention(column({1, 2}), column({3}), scalar_weights(1, 1, 1));
  for (int i = 0; i < 2; ++i) {
    const double f = i + 1;
    double num = 0, den = 0;
    for (double k : {1.0, 2.0, 3.0}) {
      num += std::exp(f * k) * k;
      den += std::exp(f * k);
    }
    CHECK(out.value()[i] == doctest::Approx(num / den).epsilon(1e-14));
  }
}

TEST_CASE("pstb_attention: softmax rows over N + N/4 keys sum to one") {
  // V ≡ 1 turns each output element into the sum of its softmax row.
  Rng rng(5);
  auto w = AttentionWeights<double>::create(8, 2, 4, rng);
  w.wv.mutable_value().array().setZero();
  w.bv.mutable_value().array().setOnes();
  const Var<double> f(random_tensor<double>({4, 16, 8}, 1, 3.0));
  const Var<double> p(random_tensor<double>({4, 4, 8}, 2, 3.0));
  const auto mask = shifted_window_mask<double>(8, 8, 4, 2, true);
  REQUIRE(mask->shape() == Shape{4, 16, 20});
  for (const auto& m : {std::shared_ptr<const Tensor<double>>(), mask}) {
    const Var<double> out = pstb_attention(f, p, w, m);
    CHECK((out.value().array() - 1.0).abs().maxCoeff() < 1e-6);
  }
  // N = 4, one prompt: rows of length 5
  auto w1 = AttentionWeights<double>::create(8, 2, 2, rng);
  w1.wv.mutable_value().array().setZero();
  w1.bv.mutable_value().array().setOnes();
  const Var<double> out = pstb_attention(Var<double>(random_tensor<double>({1, 4, 8}, 3)),
                                         Var<double>(random_tensor<double>({1, 1, 8}, 4)), w1);
  CHECK((out.value().array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("pstb_attention: keys and values have N + N/4 rows") {
  // Zero keys give uniform attention; tokens carry value 0 and prompts 1, so
  // each output is (#prompt rows) / (#key rows) = (N/4) / (N + N/4) = 0.2.
  auto w = scalar_weights(1, 0, 1);
  w.window = 4;
  const Var<double> f(Tensor<double>({2, 16, 1}, 0.0));
  const Var<double> p(Tensor<double>({2, 4, 1}, 1.0));
  const Var<double> out = pstb_attention(f, p, w);
  for (Index i = 0; i < out.size(); ++i) CHECK(out.value()[i] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS_AS(pstb_attention(f, Var<double>(Tensor<double>({2, 3, 1})), w), AdapterError);
  CHECK_THROWS_AS(pstb_attention(f, Var<double>(Tensor<double>({1, 4, 1})), w), AdapterError);
}

TEST_CASE("wmsa and augmented attention: gradients match finite differences") {
  Rng rng(8);
  auto w = AttentionWeights<double>::create(6, 2, 2, rng);
  for (Var<double>* v : {&w.wq, &w.wk, &w.wv, &w.table}) *v = Var<double>(random_tensor<double>(v->shape(), 21, 0.5), true);
  w.bq = Var<double>(random_tensor<double>({6}, 22, 0.1), true);
  const Var<double> f(random_tensor<double>({2, 4, 6}, 23), true);
  const Var<double> p(random_tensor<double>({2, 1, 6}, 24), true);
  const std::shared_ptr<const Tensor<double>> mask = std::make_shared<Tensor<double>>(random_tensor<double>({2, 4, 4}, 25));
  const std::function<Var<double>()> plain = [&] { return test::project(wmsa(f, w, mask)); };
  const std::function<Var<double>()> prompted = [&] { return test::project(pstb_attention(f, p, w)); };
  for (const Var<double>& x : {f, w.wq, w.wk, w.wv, w.bq, w.table}) {
    CHECK(test::gradient_error(plain, x) < 1e-6);
    CHECK(test::gradient_error(prompted, x) < 1e-6);
  }
  CHECK(test::gradient_error(prompted, p) < 1e-6);
}

// Direct evaluation of one Swin layer with LN, (shifted) window attention,
// projection, residual and GELU MLP, written over image coordinates.
Tensor<double> reference_swin_layer(const Tensor<double>& x, const SwinLayer<double>& layer, Index heads) {
  NamedParams<double> ps;
  layer.parameters("l", ps);
  auto get = [&](const std::string& n) -> const Tensor<double>& {
    for (const auto& [name, v] : ps)
      if (name == "l." + n) return v.value();
    throw std::logic_error(n);
  };
  const Index h = x.dim(1), wd = x.dim(2), c = x.dim(3), ws = layer.window();
  const Index s = layer.effective_shift(h, wd), d = c / heads;
  auto ln = [&](const Tensor<double>& in, const std::string& n) {
    Tensor<double> out(in.shape());
    for (Index r = 0; r < in.rows(); ++r) {
      double m = 0, v = 0;
      for (Index j = 0; j < c; ++j) m += in[r * c + j] / c;
      for (Index j = 0; j < c; ++j) v += (in[r * c + j] - m) * (in[r * c + j] - m) / c;
      for (Index j = 0; j < c; ++j)
        out[r * c + j] = (in[r * c + j] - m) / std::sqrt(v + 1e-5) * get(n + ".gamma")[j] + get(n + ".beta")[j];
    }
    return out;
  };
  auto lin = [&](const Tensor<double>& in, Index row, const std::string& n, Index out_dim, Index in_dim) {
    std::vector<double> o(static_cast<std::size_t>(out_dim));
    for (Index i = 0; i < out_dim; ++i) {
      double acc = get(n + ".bias").size() ? get(n + ".bias")[i] : 0.0;
      for (Index j = 0; j < in_dim; ++j) acc += get(n + ".weight")[i * in_dim + j] * in[row * in_dim + j];
      o[static_cast<std::size_t>(i)] = acc;
    }
    return o;
  };
  auto band = [&](Index v, Index n) { return v < n - ws ? 0 : (v < n - s ? 1 : 2); };
  const Tensor<double> xn = ln(x, "norm1");
  const Index tokens = h * wd;
  std::vector<std::vector<double>> q(tokens), k(tokens), v(tokens);
  auto proj = [&](const std::string& wn, const std::string& bn, Index t) {
    std::vector<double> o(static_cast<std::size_t>(c));
    for (Index i = 0; i < c; ++i) {
      double acc = get("attn." + bn)[i];
      for (Index j = 0; j < c; ++j) acc += get("attn." + wn)[i * c + j] * xn[t * c + j];
      o[static_cast<std::size_t>(i)] = acc;
    }
    return o;
  };
  for (Index t = 0; t < tokens; ++t) {
    q[t] = proj("wq", "bq", t);
    k[t] = proj("wk", "bk", t);
    v[t] = proj("wv", "bv", t);
  }
  const Tensor<double>& table = get("attn.relative_bias");
  Tensor<double> attended({tokens, c});
  for (Index y = 0; y < h; ++y)
    for (Index xx = 0; xx < wd; ++xx) {
      const Index py = (y - s + h) % h, px = (xx - s + wd) % wd;  // shifted coordinates
      std::vector<Index> keys;
      for (Index y2 = 0; y2 < h; ++y2)
        for (Index x2 = 0; x2 < wd; ++x2) {
          const Index qy = (y2 - s + h) % h, qx = (x2 - s + wd) % wd;
          if (qy / ws == py / ws && qx / ws == px / ws) keys.push_back(y2 * wd + x2);
        }
      for (Index hd = 0; hd < heads; ++hd) {
        std::vector<double> logits;
        for (Index key : keys) {
          const Index qy = (key / wd - s + h) % h, qx = (key % wd - s + wd) % wd;
          double dot = 0;
          for (Index j = hd * d; j < (hd + 1) * d; ++j) dot += q[y * wd + xx][j] * k[key][j];
          const Index rel = (py % ws - qy % ws + ws - 1) * (2 * ws - 1) + (px % ws - qx % ws + ws - 1);
          double logit = dot / std::sqrt(static_cast<double>(d)) + table[rel * heads + hd];
          if (s > 0 && band(py, h) * 3 + band(px, wd) != band(qy, h) * 3 + band(qx, wd)) logit += -100.0;
          logits.push_back(logit);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double den = 0;
        for (double& l : logits) den += (l = std::exp(l - mx));
        for (Index j = hd * d; j < (hd + 1) * d; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < keys.size(); ++i) acc += logits[i] / den * v[keys[i]][j];
          attended[(y * wd + xx) * c + j] = acc;
        }
      }
    }
  Tensor<double> y1(x.shape());
  for (Index t = 0; t < tokens; ++t) {
    const auto o = lin(attended, t, "proj", c, c);
    for (Index j = 0; j < c; ++j) y1[t * c + j] = x[t * c + j] + o[static_cast<std::size_t>(j)];
  }
  const Tensor<double> yn = ln(y1, "norm2");
  const Index hidden = get("fc1.bias").size();
  Tensor<double> out(x.shape());
  for (Index t = 0; t < tokens; ++t) {
    auto hdn = lin(yn, t, "fc1", hidden, c);
    for (double& e : hdn) e = 0.5 * e * (1 + std::erf(e / std::sqrt(2.0)));
    Tensor<double> hrow({1, hidden});
    for (Index j = 0; j < hidden; ++j) hrow[j] = hdn[static_cast<std::size_t>(j)];
    const auto o = lin(hrow, 0, "fc2", c, hidden);
    for (Index j = 0; j < c; ++j) out[t * c + j] = y1[t * c + j] + o[static_cast<std::size_t>(j)];
  }
  return out;
}

TEST_CASE("swin layer matches a direct coordinate-space evaluation") {
  Rng rng(31);
  for (Index shift : {0, 2}) {
    SwinLayer<double> layer(8, 2, 4, shift, 16, rng);
    // non-trivial norms and biases
    NamedParams<double> ps;
    layer.parameters("l", ps);
    std::uint64_t seed = 100;
    for (auto& [name, v] : ps) v.mutable_value() = random_tensor<double>(v.shape(), ++seed, 0.3);
    const Tensor<double> x = random_tensor<double>({1, 8, 12, 8}, 41 + shift);
    const Tensor<double> got = layer.forward(Var<double>(x)).value();
    CHECK(test::max_abs_diff(got, reference_swin_layer(x, layer, 2)) < 1e-10);
  }
}

TEST_CASE("stb: identities and shapes") {
  Rng rng(4);
  const Var<float> f(random_tensor<float>({1, 8, 8, 16}, 6));
  SwinBlock<float> empty(16, 0, 2, 4, 2, rng);
  CHECK(test::bit_equal(stb_forward(f, empty).value(), f.value()));
  SwinBlock<float> block(16, 2, 2, 4, 2, rng);
  CHECK(stb_forward(f, block).shape() == f.shape());
  CHECK(test::max_abs_diff(stb_forward(f, block).value(), f.value()) > 1e-4f);
  block.zero_residual_outputs();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Var<float> g(random_tensor<float>({2, 8, 8, 16}, 60 + s));
    CHECK(test::bit_equal(stb_forward(g, block).value(), g.value()));
  }
}

TEST_CASE("pstb: disabled prompt port equals stb, zero prompts do not") {
  Rng rng(9);
  SwinBlock<float> block(16, 2, 4, 4, 2, rng);
  float worst = 0;
  bool zero_map_differs = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Var<float> f(random_tensor<float>({1, 8, 8, 16}, 1000 + s));
    const Tensor<float> plain = stb_forward(f, block).value();
    const Tensor<float> disabled = pstb_forward(f, Var<float>(), block).value();
    worst = std::max(worst, test::max_abs_diff(plain, disabled));
    const Tensor<float> zeros = pstb_forward(f, Var<float>(Tensor<float>({1, 4, 4, 16})), block).value();
    CHECK(zeros.shape() == f.shape());
    zero_map_differs = zero_map_differs && test::max_abs_diff(plain, zeros) > 1e-6f;
  }
  CHECK(worst <= 1e-6f);
  CHECK(zero_map_differs);
  CHECK_THROWS_AS(pstb_forward(Var<float>(Tensor<float>({1, 8, 8, 16})), Var<float>(Tensor<float>({1, 8, 8, 16})), block),
                  AdapterError);
}

}  // namespace
}  // namespace jdnd
