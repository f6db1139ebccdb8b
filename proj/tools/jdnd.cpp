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

// jdnd: train, encode, decode, evaluate and count complexity.
//
// Exit codes: 0 success, 1 internal error, 2 usage, 3 missing or unreadable
// file, 4 invalid configuration or parameters, 5 config-hash mismatch,
// 6 corrupt bitstream, 7 training diverged, 8 non-finite input.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "jdnd/codec.hpp"
#include "jdnd/eval.hpp"
#include "jdnd/image_io.hpp"
#include "jdnd/noise.hpp"
#include "jdnd/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace jdnd;

namespace {

enum ExitCode {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kConfig = 4,
  kHashMismatch = 5,
  kCorrupt = 6,
  kDiverged = 7,
  kNumeric = 8,
};

constexpr char kModelDirEnv[] = "JDND_MODEL_DIR";

/// A --model argument: as given if it exists, else looked up in
/// $JDND_MODEL_DIR; an empty argument means $JDND_MODEL_DIR/default.ckpt.
std::string resolve_model(const std::string& arg) {
  const char* dir = std::getenv(kModelDirEnv);
  if (arg.empty()) {
    if (!dir) throw IoError(std::string("no --model given and ") + kModelDirEnv + " is not set");
    return (fs::path(dir) / "default.ckpt").string();
  }
  if (fs::exists(arg) || !dir || fs::path(arg).is_absolute()) return arg;
  const fs::path alt = fs::path(dir) / arg;
  return fs::exists(alt) ? alt.string() : arg;
}

std::pair<Index, Index> parse_size(const std::string& s) {
  static const std::regex re(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ConfigError("size must look like HxW, got '" + s + "'");
  return {std::stoll(m[1]), std::stoll(m[2])};
}

struct Options {
  bool json = false;
  // train
  int stage = 1;
  std::string config, out, from;
  // encode / decode / eval
  std::vector<std::string> models;
  std::string model, input, mode = "standard", pairs;
  // complexity
  std::string size = "256x256", variant = "lrm+prompt";
  // pairs / synth
  std::string clean_dir;
  Index count = 16, patch = 64, synthetic = 0, image_size = 64;
  std::uint64_t seed = 1;
  double a = -1, b = -1;
};

void emit(const Options& o, const json& j, const std::string& text) {
  if (o.json) {
    std::cout << j.dump() << std::endl;
  } else {
    std::cout << text << std::endl;
  }
}

int cmd_train(const Options& o) {
  const ModelConfig cfg = load_config(o.config);
  fs::create_directories(o.out);
  const auto images = training_images(cfg.training);
  json result;
  if (o.stage == 1) {
    std::ofstream log(fs::path(o.out) / "stage1_log.jsonl");
    const Stage1Result r = train_stage1(cfg, images, o.out, &log);
    result = {{"stage", 1}, {"checkpoints", r.checkpoints}, {"final_loss", r.losses.back()}};
  } else if (o.stage == 2) {
    std::vector<std::string> inputs;
    if (!o.from.empty()) {
      inputs.push_back(o.from);
    } else {
      for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        const fs::path p = fs::path(o.out) / stage_checkpoint_name(1, static_cast<Index>(i));
        if (fs::exists(p)) inputs.push_back(p.string());
      }
      if (inputs.empty()) throw IoError("no stage-1 checkpoints in " + o.out + " (use --from)");
    }
    std::ofstream log(fs::path(o.out) / "stage2_log.jsonl");
    json outs = json::array();
    for (const auto& in : inputs) {
      CheckpointInfo info;
      load_checkpoint(in, &info);
      const std::string path = (fs::path(o.out) / stage_checkpoint_name(2, info.config.lambda_index)).string();
      const Stage2Result r = train_stage2(cfg, in, images, path, &log);
      outs.push_back({{"checkpoint", path}, {"final_l1", r.losses.empty() ? 0.0 : r.losses.back()},
                      {"base_hash", r.base_hash_after}});
    }
    result = {{"stage", 2}, {"checkpoints", outs}};
  } else {
    throw ConfigError("--stage must be 1 or 2");
  }
  emit(o, result, result.dump(2));
  return kOk;
}

int cmd_encode(const Options& o) {
  const CodecModel model = load_checkpoint(resolve_model(o.model));
  const Image x = read_image(o.input);
  const Bitstream bs = encode_image(x, model);
  write_bitstream(bs, o.out);
  const json j = {{"input", o.input}, {"output", o.out}, {"height", x.dim(0)}, {"width", x.dim(1)},
                  {"bytes", bs.byte_size()}, {"bpp", bpp(bs)}};
  emit(o, j, o.out + ": " + std::to_string(bs.byte_size()) + " bytes, " + std::to_string(bpp(bs)) + " bpp");
  return kOk;
}

int cmd_decode(const Options& o) {
  const CodecModel model = load_checkpoint(resolve_model(o.model));
  const Bitstream bs = read_bitstream(o.input);
  const DecodedImage d = decode_image(bs, model, parse_decode_mode(o.mode));
  write_image(d.image, o.out);
  const json j = {{"input", o.input}, {"output", o.out}, {"mode", o.mode}, {"height", d.image.dim(0)},
                  {"width", d.image.dim(1)}, {"bpp", bpp(bs)}};
  emit(o, j, o.out + ": " + std::to_string(d.image.dim(0)) + "x" + std::to_string(d.image.dim(1)) + " (" + o.mode + ")");
  return kOk;
}

int cmd_eval(const Options& o) {
  const PairSet pairs = regenerate(read_manifest(o.pairs));
  if (pairs.size() == 0) throw IoError("manifest " + o.pairs + " lists no pairs");
  std::vector<std::string> models = o.models;
  if (models.empty()) models.push_back("");
  std::vector<RDPoint> points;
  json summary = json::array();
  for (const auto& arg : models) {
    const CodecModel model = load_checkpoint(resolve_model(arg));
    const ModelConfig& cfg = model.config();
    std::vector<DecodeMode> modes = {DecodeMode::kStandard};
    if (cfg.has_lrm() || cfg.has_prompts()) modes.push_back(DecodeMode::kDenoise);
    for (DecodeMode mode : modes) {
      double sum_bpp = 0, sum_psnr = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Bitstream bs = parse_bitstream(serialize(encode_image(pairs.noisy[i], model)));
        const DecodedImage d = decode_image(bs, model, mode);
        RDPoint p{pairs.records[i].source + "#" + std::to_string(i), to_string(mode), cfg.lambda(), bpp(bs),
                  psnr(pairs.clean[i], d.image)};
        sum_bpp += p.bpp;
        sum_psnr += p.psnr;
        points.push_back(std::move(p));
      }
      const double n = static_cast<double>(pairs.size());
      summary.push_back({{"model", resolve_model(arg)}, {"mode", to_string(mode)}, {"lambda", cfg.lambda()},
                         {"bpp", sum_bpp / n}, {"psnr", sum_psnr / n}});
    }
  }
  const std::string svg = export_rd(points, o.out);
  const json j = {{"csv", o.out}, {"plot", svg}, {"summary", summary}};
  emit(o, j, j.dump(2));
  return kOk;
}

int cmd_complexity(const Options& o) {
  const ModelConfig cfg = load_config(o.config);
  const auto [h, w] = parse_size(o.size);
  std::vector<std::string> variants;
  if (o.variant == "all") {
    variants = complexity_variants();
  } else {
    variants.push_back(o.variant);
  }
  json arr = json::array();
  std::ostringstream text;
  text << "variant               kMACs/px (overhead)    params M (overhead)\n";
  for (const auto& v : variants) {
    const ComplexityReport r = count_complexity(cfg, h, w, v);
    arr.push_back(json::parse(r.to_json()));
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %9.2f (%+6.2f%%)   %7.3f (%+6.2f%%)\n", v.c_str(), r.kmacs_per_pixel(),
                  r.macs_overhead_pct(), static_cast<double>(r.total_params) / 1e6, r.params_overhead_pct());
    text << line;
  }
  emit(o, arr.size() == 1 ? arr[0] : arr, text.str());
  return kOk;
}

int cmd_pairs(const Options& o) {
  NoiseProfile profile;
  NoiseParams np{o.a >= 0 ? o.a : profile.a, o.b >= 0 ? o.b : profile.b, o.seed};
  PairSet set;
  if (o.synthetic > 0) {
    set = make_pairs(synthetic_images(o.synthetic, o.image_size, o.seed), np, o.patch, o.count);
  } else {
    if (o.clean_dir.empty()) throw ConfigError("pairs needs --clean-dir or --synthetic N");
    set = make_pairs(o.clean_dir, np, o.patch, o.count);
  }
  write_manifest(set.records, o.out);
  const json j = {{"manifest", o.out}, {"pairs", set.size()}};
  emit(o, j, o.out + ": " + std::to_string(set.size()) + " pairs");
  return kOk;
}

int cmd_synth(const Options& o) {
  fs::create_directories(o.out);
  json files = json::array();
  for (const auto& s : synthetic_images(o.count, o.image_size, o.seed)) {
    const std::string path = (fs::path(o.out) / ("synthetic_" + std::to_string(files.size()) + ".png")).string();
    write_image(s.image, path);
    files.push_back(path);
  }
  emit(o, {{"files", files}}, std::to_string(files.size()) + " images in " + o.out);
  return kOk;
}

int cmd_noise(const Options& o) {
  NoiseProfile profile;
  const NoiseParams np{o.a >= 0 ? o.a : profile.a, o.b >= 0 ? o.b : profile.b, o.seed};
  write_image(add_noise(read_image(o.input), np), o.out);
  emit(o, {{"output", o.out}, {"a", np.a}, {"b", np.b}, {"seed", np.seed}}, o.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned image codec with a switchable denoising decoder"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_flag("--json", o.json, "Print machine-readable JSON to stdout");

  auto* train = app.add_subcommand("train", "Train the base codec (stage 1) or the denoising add-ons (stage 2)");
  train->add_option("--stage", o.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--config", o.config, "Config file")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--from", o.from, "Stage-1 checkpoint for stage 2 (default: every stage-1 checkpoint in --out)");

  auto* encode = app.add_subcommand("encode", "Compress an image");
  encode->add_option("--model", o.model, std::string("Checkpoint (or a name in $") + kModelDirEnv + ")");
  encode->add_option("--input", o.input, "PNG or PPM image")->required();
  encode->add_option("--out", o.out, "Bitstream file")->required();

  auto* decode = app.add_subcommand("decode", "Decompress a bitstream");
  decode->add_option("--model", o.model, std::string("Checkpoint (or a name in $") + kModelDirEnv + ")");
  decode->add_option("--input", o.input, "Bitstream file")->required();
  decode->add_option("--mode", o.mode, "standard or denoise")
      ->check(CLI::IsMember({"standard", "denoise"}))
      ->capture_default_str();
  decode->add_option("--out", o.out, "Output image (.png, or .ppm)")->required();

  auto* eval = app.add_subcommand("eval", "Rate-distortion evaluation on a pair manifest");
  eval->add_option("--model", o.models, "Checkpoint(s); repeat for several rate points");
  eval->add_option("--pairs", o.pairs, "Pair manifest")->required();
  eval->add_option("--out", o.out, "CSV output (a .svg plot is written next to it)")->required();

  auto* complexity = app.add_subcommand("complexity", "Decoder-side params and kMACs/pixel");
  complexity->add_option("--config", o.config, "Config file")->required();
  complexity->add_option("--size", o.size, "HxW")->capture_default_str();
  complexity->add_option("--variant", o.variant,
                         "base, lrm-light, lrm, prompt, prompt-heavy, lrm-light+prompt (light), "
                         "lrm+prompt (full), lrm+prompt-heavy, or all")
      ->capture_default_str();

  auto* pairs = app.add_subcommand("pairs", "Build a clean/noisy pair manifest");
  pairs->add_option("--clean-dir", o.clean_dir, "Directory of clean images");
  pairs->add_option("--synthetic", o.synthetic, "Use N procedural images instead of a directory");
  pairs->add_option("--image-size", o.image_size, "Procedural image side")->capture_default_str();
  pairs->add_option("--count", o.count, "Number of pairs")->capture_default_str();
  pairs->add_option("--patch", o.patch, "Patch side")->capture_default_str();
  pairs->add_option("--seed", o.seed, "Seed")->capture_default_str();
  pairs->add_option("--a", o.a, "Signal-dependent variance (default: profile)");
  pairs->add_option("--b", o.b, "Signal-independent variance (default: profile)");
  pairs->add_option("--out", o.out, "Manifest file")->required();

  auto* synth = app.add_subcommand("synth", "Write procedural test images");
  synth->add_option("--count", o.count, "Number of images")->capture_default_str();
  synth->add_option("--image-size", o.image_size, "Side length")->capture_default_str();
  synth->add_option("--seed", o.seed, "Seed")->capture_default_str();
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* noise = app.add_subcommand("noise", "Add Poissonian-Gaussian noise to an image");
  noise->add_option("--input", o.input, "Clean image")->required();
  noise->add_option("--out", o.out, "Noisy image")->required();
  noise->add_option("--seed", o.seed, "Seed")->capture_default_str();
  noise->add_option("--a", o.a, "Signal-dependent variance (default: profile)");
  noise->add_option("--b", o.b, "Signal-independent variance (default: profile)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*encode) return cmd_encode(o);
    if (*decode) return cmd_decode(o);
    if (*eval) return cmd_eval(o);
    if (*complexity) return cmd_complexity(o);
    if (*pairs) return cmd_pairs(o);
    if (*synth) return cmd_synth(o);
    if (*noise) return cmd_noise(o);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const HashMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kHashMismatch;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCorrupt;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const AdapterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const EncodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
