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

// Latent refinement: a residual block that maps the latent of a noisy image
// toward the latent of its clean version.

#ifndef JDND_LATENT_REFINE_HPP_
#define JDND_LATENT_REFINE_HPP_

#include <string>

#include "jdnd/config.hpp"
#include "jdnd/layers.hpp"

namespace jdnd {

/// Spatial feature transform, SFT(F) = α(F) ⊙ F + β(F). α and β are each a
/// 1×1 conv, LeakyReLU, 3×3 conv stack conditioned on F itself.
template <typename Scalar>
class SpatialFeatureTransform {
 public:
  SpatialFeatureTransform() = default;
  SpatialFeatureTransform(Index channels, Index hidden, Rng& rng)
      : alpha_in_(channels, hidden, 1, 1, 1, rng),
        alpha_out_(hidden, channels, 3, 1, 1, rng, 0.1),
        beta_in_(channels, hidden, 1, 1, 1, rng),
        beta_out_(hidden, channels, 3, 1, 1, rng, 0.1) {
    alpha_out_.bias().mutable_value().array().setOnes();
  }

  Var<Scalar> alpha(const Var<Scalar>& f) const {
    return alpha_out_(leaky_relu(alpha_in_(f), Scalar(0.1)));
  }
  Var<Scalar> beta(const Var<Scalar>& f) const {
    return beta_out_(leaky_relu(beta_in_(f), Scalar(0.1)));
  }

  Var<Scalar> forward(const Var<Scalar>& f) const { return alpha(f) * f + beta(f); }

  /// Forces α ≡ 1 and β ≡ 0.
  void set_identity() {
    alpha_out_.weight().mutable_value().array().setZero();
    alpha_out_.bias().mutable_value().array().setOnes();
    beta_out_.weight().mutable_value().array().setZero();
    beta_out_.bias().mutable_value().array().setZero();
  }

  /// Forces α ≡ 0; β is untouched.
  void set_zero_scale() {
    alpha_out_.weight().mutable_value().array().setZero();
    alpha_out_.bias().mutable_value().array().setZero();
  }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    alpha_in_.parameters(prefix + ".alpha_in", out);
    alpha_out_.parameters(prefix + ".alpha_out", out);
    beta_in_.parameters(prefix + ".beta_in", out);
    beta_out_.parameters(prefix + ".beta_out", out);
  }

 private:
  Conv2d<Scalar> alpha_in_, alpha_out_, beta_in_, beta_out_;
};

template <typename Scalar>
Var<Scalar> sft(const Var<Scalar>& f, const SpatialFeatureTransform<Scalar>& t) {
  return t.forward(f);
}

/// ỹ = ŷ + r(ŷ) with r = SFT → (G)Conv3×3 → SFT → (G)Conv3×3. The light
/// variant uses 16-group convolutions. The last conv starts at zero, so a
/// fresh module is the identity.
template <typename Scalar>
class LatentRefiner {
 public:
  LatentRefiner() = default;
  LatentRefiner(Index channels, Index sft_hidden, LrmVariant variant, Rng& rng) {
    if (variant == LrmVariant::kNone) throw ConfigError("latent refiner needs a variant");
    const Index groups = variant == LrmVariant::kLight ? 16 : 1;
    if (channels % groups) {
      throw ConfigError("light latent refinement needs channels divisible by 16, got " +
                        std::to_string(channels));
    }
    sft1_ = SpatialFeatureTransform<Scalar>(channels, sft_hidden, rng);
    conv1_ = Conv2d<Scalar>(channels, channels, 3, 1, groups, rng);
    sft2_ = SpatialFeatureTransform<Scalar>(channels, sft_hidden, rng);
    conv2_ = Conv2d<Scalar>(channels, channels, 3, 1, groups, rng);
    conv2_.weight().mutable_value().array().setZero();
    conv2_.bias().mutable_value().array().setZero();
  }

  Var<Scalar> residual(const Var<Scalar>& y) const {
    return conv2_(sft2_.forward(conv1_(sft1_.forward(y))));
  }

  Var<Scalar> forward(const Var<Scalar>& y) const { return y + residual(y); }

  SpatialFeatureTransform<Scalar>& sft1() { return sft1_; }
  SpatialFeatureTransform<Scalar>& sft2() { return sft2_; }
  Conv2d<Scalar>& conv2() { return conv2_; }

  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
    sft1_.parameters(prefix + ".sft1", out);
    conv1_.parameters(prefix + ".conv1", out);
    sft2_.parameters(prefix + ".sft2", out);
    conv2_.parameters(prefix + ".conv2", out);
  }

 private:
  SpatialFeatureTransform<Scalar> sft1_, sft2_;
  Conv2d<Scalar> conv1_, conv2_;
};

template <typename Scalar>
Var<Scalar> lrm_forward(const Var<Scalar>& y, const LatentRefiner<Scalar>& lrm) {
  return lrm.forward(y);
}

}  // namespace jdnd

#endif  // JDND_LATENT_REFINE_HPP_
