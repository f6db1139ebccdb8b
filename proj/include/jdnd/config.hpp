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

#ifndef JDND_CONFIG_HPP_
#define JDND_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/tensor.hpp"

namespace jdnd {

inline constexpr int kConfigSchemaVersion = 1;

/// Rate points used for the four base-codec checkpoints (255-scale MSE).
inline const std::vector<double> kPaperLambdas = {0.0018, 0.0035, 0.0067, 0.013};

enum class LrmVariant { kNone, kNormal, kLight };
enum class PromptTargets { kNone, kLastTwo, kAll };
enum class PromptConvs { kGrouped16, kFull };

struct NoiseProfile {
  std::string name = "sidd-standin";
  double a = 0.01;     // signal-dependent variance slope
  double b = 0.0005;   // signal-independent variance
};

struct TrainingConfig {
  // data
  std::string clean_dir;         // empty: procedurally generated images
  Index num_images = 50;
  Index image_size = 64;         // side of generated images
  Index patch = 64;
  Index holdout = 16;            // noisy patches held out for validation
  NoiseProfile noise;
  // optimization
  Index batch = 8;
  double lr = 1e-4;
  double lr_stage2 = 1e-4;
  double lr_decay = 1.0;          // lr factor applied after lr_decay_at of each run
  double lr_decay_at = 0.8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 1.0;        // global norm; <= 0 disables
  Index stage1_steps = 1000;
  Index stage1_finetune_steps = 0;  // per extra rate point, warm-started
  Index stage2_steps = 500;
  Index log_every = 10;
  std::uint64_t seed = 1234;
};

/// Architecture plus add-on variant flags. Shapes everywhere derive from it.
struct ModelConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "toy";

  // base codec
  std::vector<Index> channels = {32, 48, 64, 96};  // per stage; last == latent
  std::vector<Index> depths = {2, 2, 2, 2};         // Swin layers per encoder stage
  std::vector<Index> heads = {2, 3, 4, 6};
  Index window = 4;
  Index mlp_ratio = 2;
  Index kernel = 5;             // main-transform (de)convolutions, stride 2
  Index hyper_channels = 64;
  Index hyper_latent_channels = 64;
  bool mirror_decoder = true;   // decoder reuses encoder depths/heads reversed

  // add-ons
  LrmVariant lrm = LrmVariant::kNormal;
  Index sft_hidden = 32;
  PromptTargets prompt_targets = PromptTargets::kLastTwo;
  PromptConvs prompt_convs = PromptConvs::kGrouped16;
  Index prompt_hidden = 96;
  Index prompt_groups = 16;

  // rate points
  std::vector<double> lambdas = kPaperLambdas;
  Index lambda_index = 3;

  TrainingConfig training;

  Index stages() const { return static_cast<Index>(channels.size()); }
  Index latent_channels() const { return channels.back(); }
  /// Spatial reduction of the analysis transform.
  Index downsample_factor() const { return Index{1} << stages(); }
  /// Images are padded to a multiple of this so that every Swin stage is an
  /// exact multiple of the window.
  Index pad_multiple() const { return downsample_factor() * window; }
  double lambda() const { return lambdas.at(static_cast<std::size_t>(lambda_index)); }

  /// Decoder block i (0 = latent resolution) Swin depth and heads.
  Index decoder_depth(Index block) const;
  Index decoder_heads(Index block) const;
  /// Channel width at the input of decoder block i.
  Index decoder_channels(Index block) const;

  bool has_lrm() const { return lrm != LrmVariant::kNone; }
  bool has_prompts() const { return prompt_targets != PromptTargets::kNone; }
  /// Decoder block indices that receive prompts.
  std::vector<Index> prompt_target_blocks() const;

  /// Throws ConfigError when the fields are inconsistent.
  void validate() const;

  /// FNV-1a hash of the base-codec architecture. Add-on flags, rate points
  /// and training settings do not enter it, so every checkpoint built on the
  /// same base decodes the same bitstreams.
  std::uint64_t hash() const;
};

std::string to_string(LrmVariant v);
std::string to_string(PromptTargets v);
std::string to_string(PromptConvs v);
LrmVariant parse_lrm_variant(const std::string& s);
PromptTargets parse_prompt_targets(const std::string& s);
PromptConvs parse_prompt_convs(const std::string& s);

/// JSON text with a "schema_version" key. Unknown keys are rejected.
std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);
ModelConfig load_config(const std::string& path);
void save_config(const ModelConfig& cfg, const std::string& path);

/// Canonical serialization of the fields that enter ModelConfig::hash().
std::string base_architecture_key(const ModelConfig& cfg);

}  // namespace jdnd

#endif  // JDND_CONFIG_HPP_
