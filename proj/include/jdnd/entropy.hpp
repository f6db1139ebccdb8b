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

// Quantization and discretized-Gaussian probability models.

#ifndef JDND_ENTROPY_HPP_
#define JDND_ENTROPY_HPP_

#include <cmath>
#include <cstdint>
#include <random>

#include "jdnd/ops.hpp"

namespace jdnd {

inline constexpr double kSigmaMin = 0.04;
inline constexpr double kProbFloor = 1.0 / 65536.0;  // 2^-16

enum class QuantMode { kTrain, kInfer };

/// Round half away from zero; the tie rule is fixed for cross-platform
/// determinism.
inline double round_half_away(double v) { return std::round(v); }

/// infer: elementwise rounding to integers. train: v + u with
/// u ~ U[-0.5, 0.5) drawn from `seed`.
template <typename Scalar>
Tensor<Scalar> quantize(const Tensor<Scalar>& v, QuantMode mode, std::uint64_t seed = 0) {
  Tensor<Scalar> out(v.shape());
  if (mode == QuantMode::kInfer) {
    for (Index i = 0; i < v.size(); ++i) out[i] = static_cast<Scalar>(round_half_away(v[i]));
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (Index i = 0; i < v.size(); ++i) out[i] = v[i] + static_cast<Scalar>(u(rng));
  }
  return out;
}

/// Differentiable training surrogate: v + U[-0.5, 0.5) noise.
template <typename Scalar, typename Generator>
Var<Scalar> add_quantization_noise(const Var<Scalar>& v, Generator& rng) {
  return add_constant(v, Tensor<Scalar>::uniform(v.shape(), rng, Scalar(-0.5), Scalar(0.5)));
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// P(v) = Φ((v+½-μ)/σ) - Φ((v-½-μ)/σ), evaluated on the tail nearer zero for
/// precision.
inline double gaussian_pmf(double v, double mu, double sigma) {
  sigma = std::max(sigma, kSigmaMin);
  const double t = std::abs(v - mu);
  return normal_cdf((0.5 - t) / sigma) - normal_cdf((-0.5 - t) / sigma);
}

/// −log2 max(P(v), 2^-16).
inline double gaussian_bits(double v, double mu, double sigma) {
  return -std::log2(std::max(gaussian_pmf(v, mu, sigma), kProbFloor));
}

/// Per-element (μ, σ) of a conditional Gaussian model.
template <typename Scalar>
struct GaussianParams {
  Tensor<Scalar> mu;
  Tensor<Scalar> sigma;
};

/// Bits of every element of an integer-valued tensor under `gp`.
template <typename Scalar>
Tensor<Scalar> gaussian_bits(const Tensor<Scalar>& v, const GaussianParams<Scalar>& gp) {
  if (v.shape() != gp.mu.shape() || v.shape() != gp.sigma.shape()) {
    throw ConfigError("gaussian_bits: shape mismatch");
  }
  Tensor<Scalar> out(v.shape());
  for (Index i = 0; i < v.size(); ++i) out[i] = static_cast<Scalar>(gaussian_bits(v[i], gp.mu[i], gp.sigma[i]));
  return out;
}

/// Bits of [.., C] elements under zero-mean Gaussians with per-channel scale.
template <typename Scalar>
Tensor<Scalar> factorized_bits(const Tensor<Scalar>& v, const Tensor<Scalar>& channel_sigma) {
  const Index c = v.cols();
  if (channel_sigma.size() != c) throw ConfigError("factorized_bits: channel mismatch");
  Tensor<Scalar> out(v.shape());
  for (Index i = 0; i < v.size(); ++i) out[i] = static_cast<Scalar>(gaussian_bits(v[i], 0.0, channel_sigma[i % c]));
  return out;
}

/// Differentiable per-element bits of (noisy) values under N(μ, σ) with the
/// same discretization and probability floor. Where the floor is active the
/// gradient is zero.
template <typename Scalar>
Var<Scalar> likelihood_bits(const Var<Scalar>& v, const Var<Scalar>& mu, const Var<Scalar>& sigma) {
  detail::require_same_shape(v.shape(), mu.shape(), "likelihood_bits");
  detail::require_same_shape(v.shape(), sigma.shape(), "likelihood_bits");
  const Index n = v.size();
  Tensor<Scalar> bits(v.shape());
  // per element: dbits/dv, dbits/dσ (dbits/dμ = -dbits/dv)
  auto dv = std::make_shared<Tensor<Scalar>>(v.shape());
  auto ds = std::make_shared<Tensor<Scalar>>(v.shape());
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const double ln2 = std::log(2.0);
  for (Index i = 0; i < n; ++i) {
    const double s = std::max(static_cast<double>(sigma.value()[i]), kSigmaMin);
    const double t = static_cast<double>(v.value()[i]) - static_cast<double>(mu.value()[i]);
    const double sign = t < 0 ? -1.0 : 1.0;
    const double at = std::abs(t);
    const double u_hi = (0.5 - at) / s, u_lo = (-0.5 - at) / s;
    const double p = normal_cdf(u_hi) - normal_cdf(u_lo);
    if (p > kProbFloor) {
      bits[i] = static_cast<Scalar>(-std::log2(p));
      const double phi_hi = kInvSqrt2Pi * std::exp(-0.5 * u_hi * u_hi);
      const double phi_lo = kInvSqrt2Pi * std::exp(-0.5 * u_lo * u_lo);
      // dp/d|t| = -(φ_hi - φ_lo)/σ; dp/dσ = -(u_hi φ_hi - u_lo φ_lo)/σ
      const double dp_dat = -(phi_hi - phi_lo) / s;
      const double dp_ds = -(u_hi * phi_hi - u_lo * phi_lo) / s;
      const double db_dp = -1.0 / (p * ln2);
      (*dv)[i] = static_cast<Scalar>(db_dp * dp_dat * sign);
      const bool clamped = static_cast<double>(sigma.value()[i]) < kSigmaMin;
      (*ds)[i] = clamped ? Scalar(0) : static_cast<Scalar>(db_dp * dp_ds);
    } else {
      bits[i] = static_cast<Scalar>(-std::log2(kProbFloor));
    }
  }
  return make_result<Scalar>(std::move(bits), {v, mu, sigma}, [v, mu, sigma, dv, ds](const Tensor<Scalar>& g) {
    if (v.requires_grad()) v.node()->accumulate(g.array() * dv->array());
    if (mu.requires_grad()) mu.node()->accumulate(-(g.array() * dv->array()));
    if (sigma.requires_grad()) sigma.node()->accumulate(g.array() * ds->array());
  });
}

/// Broadcasts a per-channel vector [C] to `shape` (last axis C).
template <typename Scalar>
Var<Scalar> broadcast_channels(const Var<Scalar>& per_channel, const Shape& shape) {
  const Index c = per_channel.size();
  if (shape.back() != c) throw ConfigError("broadcast_channels: channel mismatch");
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(shape_size(shape)));
  for (std::size_t i = 0; i < map->size(); ++i) (*map)[i] = static_cast<Index>(i) % c;
  return gather(per_channel, IndexMap(map), shape);
}

}  // namespace jdnd

#endif  // JDND_ENTROPY_HPP_
