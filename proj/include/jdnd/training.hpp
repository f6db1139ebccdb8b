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

// Stage 1: the base codec on clean images with the rate-distortion loss.
// Stage 2: the frozen base plus latent refinement and prompt generator on
// clean/noisy pairs with the l1 loss.

#ifndef JDND_TRAINING_HPP_
#define JDND_TRAINING_HPP_

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "jdnd/codec.hpp"
#include "jdnd/noise.hpp"

namespace jdnd {

/// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// MSE(255·x, 255·x̂): the scale the published rate points refer to.
template <typename Scalar>
Var<Scalar> mse_255(const Var<Scalar>& x, const Var<Scalar>& x_hat) {
  return scale(mean(square(x_hat - x)), Scalar(255 * 255));
}

/// bpp_z + bpp_y + λ·MSE₂₅₅(x, x̂). bpp terms are scalar Vars.
template <typename Scalar>
Var<Scalar> rd_loss(const Var<Scalar>& x, const Var<Scalar>& x_hat, const Var<Scalar>& bpp_y,
                    const Var<Scalar>& bpp_z, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("rate-distortion lambda must be positive, got " + std::to_string(lambda));
  return bpp_z + bpp_y + scale(mse_255(x, x_hat), static_cast<Scalar>(lambda));
}

/// Mean absolute error over all pixels and channels.
template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& x_clean, const Var<Scalar>& x_hat) {
  if (x_clean.shape() != x_hat.shape()) {
    throw ConfigError("l1_loss: shape mismatch " + shape_string(x_clean.shape()) + " vs " +
                      shape_string(x_hat.shape()));
  }
  return mean(abs(x_hat - x_clean));
}

/// Adam with optional global-norm gradient clipping. Parameters that do not
/// require a gradient are skipped.
class Adam {
 public:
  Adam(NamedParams<float> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double clip = 0.0);

  void zero_grad();
  /// Returns the global gradient norm before clipping.
  double step();
  void set_lr(double lr) { lr_ = lr; }

 private:
  NamedParams<float> params_;
  std::vector<Tensor<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_, clip_;
  std::int64_t t_ = 0;
};

/// Stacks [H,W,3] images into a [B,H,W,3] batch.
Tensor<float> stack(const std::vector<Tensor<float>>& images);

struct RdTerms {
  Var<float> loss, bpp_y, bpp_z, mse;
  Var<float> x_hat;
};

/// Training-mode forward pass of the base codec with additive uniform noise.
RdTerms rd_forward(const CodecModel& model, const Var<float>& x, double lambda, Rng& rng);

struct RdEval {
  double loss = 0, bpp = 0, mse = 0, psnr = 0;
};

/// Deterministic inference-mode evaluation: rounded latents, model bits,
/// standard reconstruction. Averaged over `images`.
RdEval evaluate_rd(const CodecModel& model, const std::vector<Tensor<float>>& images, double lambda);

/// Clean images per the training config: a directory or procedural images.
std::vector<Tensor<float>> training_images(const TrainingConfig& tc);
/// Noisy/clean pairs held out from training (distinct seeds).
PairSet holdout_pairs(const TrainingConfig& tc);

struct Stage1Result {
  std::vector<std::string> checkpoints;  // one per trained rate point
  std::vector<Index> lambda_indices;
  std::vector<double> losses;            // per step, base run then finetunes
  Index base_steps = 0;
};

/// Trains at cfg.lambda_index for stage1_steps, then warm-starts each other
/// rate point for stage1_finetune_steps (skipped when 0). Writes
/// `out_dir/stage1_lambda<i>.ckpt` and a JSON-lines log to `log`.
Stage1Result train_stage1(const ModelConfig& cfg, const std::vector<Tensor<float>>& images,
                          const std::string& out_dir, std::ostream* log = nullptr);

struct Stage2Result {
  std::string checkpoint;
  std::vector<double> losses;
  std::uint64_t base_hash_before = 0, base_hash_after = 0;
};

/// Loads the base from `stage1_ckpt`, freezes it, and trains the add-ons of
/// `cfg` on fresh noisy versions of `images`. Throws if a base parameter
/// changed.
Stage2Result train_stage2(const ModelConfig& cfg, const std::string& stage1_ckpt,
                          const std::vector<Tensor<float>>& images, const std::string& out_path,
                          std::ostream* log = nullptr);

std::string stage_checkpoint_name(int stage, Index lambda_index);

}  // namespace jdnd

#endif  // JDND_TRAINING_HPP_
