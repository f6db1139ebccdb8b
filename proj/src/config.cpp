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

#include "jdnd/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace jdnd {
namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == it.key();
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

Index ModelConfig::decoder_depth(Index block) const {
  return mirror_decoder ? depths.at(static_cast<std::size_t>(stages() - 1 - block))
                        : depths.at(static_cast<std::size_t>(block));
}

Index ModelConfig::decoder_heads(Index block) const {
  return mirror_decoder ? heads.at(static_cast<std::size_t>(stages() - 1 - block))
                        : heads.at(static_cast<std::size_t>(block));
}

Index ModelConfig::decoder_channels(Index block) const {
  return channels.at(static_cast<std::size_t>(stages() - 1 - block));
}

std::vector<Index> ModelConfig::prompt_target_blocks() const {
  std::vector<Index> out;
  switch (prompt_targets) {
    case PromptTargets::kNone:
      break;
    case PromptTargets::kLastTwo:
      for (Index i = std::max<Index>(0, stages() - 2); i < stages(); ++i) out.push_back(i);
      break;
    case PromptTargets::kAll:
      for (Index i = 0; i < stages(); ++i) out.push_back(i);
      break;
  }
  return out;
}

void ModelConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(schema_version));
  }
  const auto n = channels.size();
  if (n < 1 || depths.size() != n || heads.size() != n) {
    throw ConfigError("channels, depths and heads must have the same non-zero length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (channels[i] < 1 || depths[i] < 0 || heads[i] < 1) throw ConfigError("non-positive stage setting");
    if (channels[i] % heads[i]) {
      throw ConfigError("stage " + std::to_string(i) + ": heads must divide channels");
    }
  }
  if (window < 1) throw ConfigError("window must be >= 1");
  if (kernel < 2 || kernel % 2 == 0) throw ConfigError("kernel must be odd and >= 3");
  if (mlp_ratio < 1 || hyper_channels < 1 || hyper_latent_channels < 1) {
    throw ConfigError("non-positive width");
  }
  if (lambda_index < 0 || lambda_index >= static_cast<Index>(lambdas.size())) {
    throw ConfigError("lambda_index out of range");
  }
  for (double l : lambdas) {
    if (!(l > 0)) throw ConfigError("lambda must be positive");
  }
  if (!(training.lr_decay > 0) || training.lr_decay_at < 0 || training.lr_decay_at > 1) {
    throw ConfigError("lr_decay must be positive and lr_decay_at in [0, 1]");
  }
  if (lrm == LrmVariant::kLight && latent_channels() % 16) {
    throw ConfigError("light latent refinement needs latent channels divisible by 16");
  }
  if (lrm != LrmVariant::kNone && sft_hidden < 1) throw ConfigError("sft_hidden must be positive");
  if (has_prompts()) {
    if (window % 4) {
      throw ConfigError("prompting needs a window divisible by 4 (half-size prompt windows, "
                        "half-size shifts)");
    }
    const Index g = prompt_convs == PromptConvs::kGrouped16 ? prompt_groups : 1;
    if (prompt_hidden % g) throw ConfigError("prompt_hidden not divisible by prompt groups");
    if (latent_channels() % g) throw ConfigError("latent channels not divisible by prompt groups");
    for (Index b : prompt_target_blocks()) {
      if (decoder_channels(b) % g) {
        throw ConfigError("prompt target channels " + std::to_string(decoder_channels(b)) +
                          " not divisible by " + std::to_string(g) + " groups");
      }
    }
  }
}

std::string base_architecture_key(const ModelConfig& cfg) {
  json j;
  j["channels"] = cfg.channels;
  j["depths"] = cfg.depths;
  j["heads"] = cfg.heads;
  j["window"] = cfg.window;
  j["mlp_ratio"] = cfg.mlp_ratio;
  j["kernel"] = cfg.kernel;
  j["hyper_channels"] = cfg.hyper_channels;
  j["hyper_latent_channels"] = cfg.hyper_latent_channels;
  j["mirror_decoder"] = cfg.mirror_decoder;
  j["schema_version"] = cfg.schema_version;
  return j.dump();
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : base_architecture_key(*this)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_string(LrmVariant v) {
  switch (v) {
    case LrmVariant::kNone: return "none";
    case LrmVariant::kNormal: return "normal";
    case LrmVariant::kLight: return "light";
  }
  return "?";
}

std::string to_string(PromptTargets v) {
  switch (v) {
    case PromptTargets::kNone: return "none";
    case PromptTargets::kLastTwo: return "last2";
    case PromptTargets::kAll: return "all";
  }
  return "?";
}

std::string to_string(PromptConvs v) {
  return v == PromptConvs::kGrouped16 ? "grouped16" : "full";
}

LrmVariant parse_lrm_variant(const std::string& s) {
  if (s == "none") return LrmVariant::kNone;
  if (s == "normal") return LrmVariant::kNormal;
  if (s == "light") return LrmVariant::kLight;
  throw ConfigError("lrm must be none|normal|light, got '" + s + "'");
}

PromptTargets parse_prompt_targets(const std::string& s) {
  if (s == "none") return PromptTargets::kNone;
  if (s == "last2") return PromptTargets::kLastTwo;
  if (s == "all") return PromptTargets::kAll;
  throw ConfigError("prompt_targets must be none|last2|all, got '" + s + "'");
}

PromptConvs parse_prompt_convs(const std::string& s) {
  if (s == "grouped16") return PromptConvs::kGrouped16;
  if (s == "full") return PromptConvs::kFull;
  throw ConfigError("prompt_convs must be grouped16|full, got '" + s + "'");
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["name"] = cfg.name;
  j["model"] = {{"channels", cfg.channels},
                {"depths", cfg.depths},
                {"heads", cfg.heads},
                {"window", cfg.window},
                {"mlp_ratio", cfg.mlp_ratio},
                {"kernel", cfg.kernel},
                {"hyper_channels", cfg.hyper_channels},
                {"hyper_latent_channels", cfg.hyper_latent_channels},
                {"mirror_decoder", cfg.mirror_decoder}};
  j["addons"] = {{"lrm", to_string(cfg.lrm)},
                 {"sft_hidden", cfg.sft_hidden},
                 {"prompt_targets", to_string(cfg.prompt_targets)},
                 {"prompt_convs", to_string(cfg.prompt_convs)},
                 {"prompt_hidden", cfg.prompt_hidden},
                 {"prompt_groups", cfg.prompt_groups}};
  j["rate"] = {{"lambdas", cfg.lambdas}, {"lambda_index", cfg.lambda_index}};
  const auto& t = cfg.training;
  j["training"] = {{"clean_dir", t.clean_dir},
                   {"num_images", t.num_images},
                   {"image_size", t.image_size},
                   {"patch", t.patch},
                   {"holdout", t.holdout},
                   {"noise", {{"name", t.noise.name}, {"a", t.noise.a}, {"b", t.noise.b}}},
                   {"batch", t.batch},
                   {"lr", t.lr},
                   {"lr_stage2", t.lr_stage2},
                   {"lr_decay", t.lr_decay},
                   {"lr_decay_at", t.lr_decay_at},
                   {"beta1", t.beta1},
                   {"beta2", t.beta2},
                   {"grad_clip", t.grad_clip},
                   {"stage1_steps", t.stage1_steps},
                   {"stage1_finetune_steps", t.stage1_finetune_steps},
                   {"stage2_steps", t.stage2_steps},
                   {"log_every", t.log_every},
                   {"seed", t.seed}};
  return j.dump(2);
}

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    reject_unknown(j, {"schema_version", "name", "model", "addons", "rate", "training"}, "config");
    read(j, "schema_version", cfg.schema_version);
    read(j, "name", cfg.name);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"channels", "depths", "heads", "window", "mlp_ratio", "kernel",
                         "hyper_channels", "hyper_latent_channels", "mirror_decoder"},
                     "model");
      read(m, "channels", cfg.channels);
      read(m, "depths", cfg.depths);
      read(m, "heads", cfg.heads);
      read(m, "window", cfg.window);
      read(m, "mlp_ratio", cfg.mlp_ratio);
      read(m, "kernel", cfg.kernel);
      read(m, "hyper_channels", cfg.hyper_channels);
      read(m, "hyper_latent_channels", cfg.hyper_latent_channels);
      read(m, "mirror_decoder", cfg.mirror_decoder);
    }
    if (j.contains("addons")) {
      const auto& a = j.at("addons");
      reject_unknown(a, {"lrm", "sft_hidden", "prompt_targets", "prompt_convs", "prompt_hidden",
                         "prompt_groups"},
                     "addons");
      if (a.contains("lrm")) cfg.lrm = parse_lrm_variant(a.at("lrm").get<std::string>());
      read(a, "sft_hidden", cfg.sft_hidden);
      if (a.contains("prompt_targets"))
        cfg.prompt_targets = parse_prompt_targets(a.at("prompt_targets").get<std::string>());
      if (a.contains("prompt_convs"))
        cfg.prompt_convs = parse_prompt_convs(a.at("prompt_convs").get<std::string>());
      read(a, "prompt_hidden", cfg.prompt_hidden);
      read(a, "prompt_groups", cfg.prompt_groups);
    }
    if (j.contains("rate")) {
      const auto& r = j.at("rate");
      reject_unknown(r, {"lambdas", "lambda_index"}, "rate");
      read(r, "lambdas", cfg.lambdas);
      read(r, "lambda_index", cfg.lambda_index);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      reject_unknown(t, {"clean_dir", "num_images", "image_size", "patch", "holdout", "noise",
                         "batch", "lr", "lr_stage2", "lr_decay", "lr_decay_at", "beta1", "beta2", "grad_clip",
                         "stage1_steps", "stage1_finetune_steps", "stage2_steps", "log_every",
                         "seed"},
                     "training");
      auto& tc = cfg.training;
      read(t, "clean_dir", tc.clean_dir);
      read(t, "num_images", tc.num_images);
      read(t, "image_size", tc.image_size);
      read(t, "patch", tc.patch);
      read(t, "holdout", tc.holdout);
      if (t.contains("noise")) {
        const auto& nz = t.at("noise");
        reject_unknown(nz, {"name", "a", "b"}, "training.noise");
        read(nz, "name", tc.noise.name);
        read(nz, "a", tc.noise.a);
        read(nz, "b", tc.noise.b);
      }
      read(t, "batch", tc.batch);
      read(t, "lr", tc.lr);
      read(t, "lr_stage2", tc.lr_stage2);
      read(t, "lr_decay", tc.lr_decay);
      read(t, "lr_decay_at", tc.lr_decay_at);
      read(t, "beta1", tc.beta1);
      read(t, "beta2", tc.beta2);
      read(t, "grad_clip", tc.grad_clip);
      read(t, "stage1_steps", tc.stage1_steps);
      read(t, "stage1_finetune_steps", tc.stage1_finetune_steps);
      read(t, "stage2_steps", tc.stage2_steps);
      read(t, "log_every", tc.log_every);
      read(t, "seed", tc.seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const ModelConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path);
  out << config_to_json(cfg) << '\n';
}

}  // namespace jdnd
