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

#ifndef JDND_LAYERS_HPP_
#define JDND_LAYERS_HPP_

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jdnd/ops.hpp"

namespace jdnd {

using Rng = std::mt19937_64;

template <typename Scalar>
using NamedParams = std::vector<std::pair<std::string, Var<Scalar>>>;

template <typename Scalar>
Index count_parameters(const NamedParams<Scalar>& params) {
  Index n = 0;
  for (const auto& [name, v] : params) n += v.size();
  return n;
}

template <typename Scalar>
Var<Scalar> make_parameter(Tensor<Scalar> init) {
  return Var<Scalar>(std::move(init), true);
}

/// Normal init truncated at two standard deviations.
template <typename Scalar>
Tensor<Scalar> truncated_normal(Shape shape, Rng& rng, double stddev) {
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) {
    double v;
    do {
      v = dist(rng);
    } while (std::abs(v) > 2.0);
    t[i] = static_cast<Scalar>(v * stddev);
  }
  return t;
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, Rng& rng, double stddev = 0.02)
      : weight_(make_parameter(truncated_normal<Scalar>({out, in}, rng, stddev))),
        bias_(make_parameter(Tensor<Scalar>(Shape{out}))) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return linear(x, weight_, bias_); }

  Var<Scalar>& weight() { return weight_; }
  Var<Scalar>& bias() { return bias_; }
  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  Var<Scalar> weight_, bias_;
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Index channels)
      : gamma_(make_parameter(Tensor<Scalar>(Shape{channels}, Scalar(1)))),
        beta_(make_parameter(Tensor<Scalar>(Shape{channels}))) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return layer_norm(x, gamma_, beta_); }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    out.emplace_back(prefix + ".gamma", gamma_);
    out.emplace_back(prefix + ".beta", beta_);
  }

 private:
  Var<Scalar> gamma_, beta_;
};

/// k×k convolution with "same"-style padding k/2.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in, Index out, Index kernel, Index stride, Index groups, Rng& rng,
         double gain = 1.0)
      : opt_{stride, kernel / 2, groups, 0} {
    if (in % groups || out % groups) {
      throw ConfigError("conv " + std::to_string(in) + "->" + std::to_string(out) +
                        " channels not divisible by " + std::to_string(groups) + " groups");
    }
    const double fan_in = static_cast<double>(kernel * kernel * in / groups);
    weight_ = make_parameter(Tensor<Scalar>::normal({out, kernel, kernel, in / groups}, rng,
                                                    static_cast<Scalar>(gain / std::sqrt(fan_in))));
    bias_ = make_parameter(Tensor<Scalar>(Shape{out}));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight_, bias_, opt_); }

  Var<Scalar>& weight() { return weight_; }
  Var<Scalar>& bias() { return bias_; }
  const ConvOptions& options() const { return opt_; }
  Index in_channels() const { return weight_.dim(3) * opt_.groups; }
  Index out_channels() const { return weight_.dim(0); }
  Index kernel() const { return weight_.dim(1); }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  ConvOptions opt_;
  Var<Scalar> weight_, bias_;
};

/// Stride-s transposed convolution that multiplies the spatial size by s
/// exactly (odd kernel, padding k/2, output padding s-1).
template <typename Scalar>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(Index in, Index out, Index kernel, Index stride, Rng& rng, double gain = 1.0)
      : opt_{stride, kernel / 2, 1, stride - 1} {
    const double fan_in = static_cast<double>(kernel * kernel * in) / static_cast<double>(stride * stride);
    weight_ = make_parameter(Tensor<Scalar>::normal({in, kernel, kernel, out}, rng,
                                                    static_cast<Scalar>(gain / std::sqrt(fan_in))));
    bias_ = make_parameter(Tensor<Scalar>(Shape{out}));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv_transpose2d(x, weight_, bias_, opt_);
  }

  Var<Scalar>& weight() { return weight_; }
  Var<Scalar>& bias() { return bias_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  ConvOptions opt_;
  Var<Scalar> weight_, bias_;
};

template <typename Scalar>
void set_requires_grad(const NamedParams<Scalar>& params, bool on) {
  for (const auto& [name, v] : params) v.node()->requires_grad = on;
}

}  // namespace jdnd

#endif  // JDND_LAYERS_HPP_
