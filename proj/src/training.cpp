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

#include "jdnd/training.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "jdnd/eval.hpp"

namespace jdnd {
namespace {

using json = nlohmann::json;

/// One of the 8 flips/transposes of a square image.
Tensor<float> augment(const Tensor<float>& img, unsigned mode) {
  const Index h = img.dim(0), w = img.dim(1);
  if (mode == 0 || h != w) return img;
  Tensor<float> out(img.shape());
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      Index si = (mode & 1) ? h - 1 - i : i;
      Index sj = (mode & 2) ? w - 1 - j : j;
      if (mode & 4) std::swap(si, sj);
      for (Index k = 0; k < 3; ++k) out.at({i, j, k}) = img.at({si, sj, k});
    }
  return out;
}

/// Random crop of `patch` from an image (whole image when sizes match).
Tensor<float> random_patch(const Tensor<float>& img, Index patch, Rng& rng) {
  if (img.dim(0) < patch || img.dim(1) < patch) throw ConfigError("training image smaller than patch");
  const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(img.dim(0) - patch + 1));
  const Index x = static_cast<Index>(rng() % static_cast<std::uint64_t>(img.dim(1) - patch + 1));
  Tensor<float> out(Shape{patch, patch, 3});
  for (Index i = 0; i < patch; ++i)
    std::copy_n(img.data() + ((y + i) * img.dim(1) + x) * 3, patch * 3, out.data() + i * patch * 3);
  return out;
}

std::vector<Tensor<float>> sample_batch(const std::vector<Tensor<float>>& images, Index batch,
                                        Index patch, Rng& rng) {
  std::vector<Tensor<float>> out;
  for (Index b = 0; b < batch; ++b) {
    const auto& img = images[static_cast<std::size_t>(rng() % images.size())];
    out.push_back(augment(random_patch(img, patch, rng), static_cast<unsigned>(rng() % 8)));
  }
  return out;
}

void check_finite(double loss, const std::string& what, Index step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(what + ": non-finite loss at step " + std::to_string(step) +
                          "; lower the learning rate or check the input data");
  }
}

/// First step run at the decayed learning rate.
Index decay_start(const TrainingConfig& tc, Index steps) {
  return static_cast<Index>(std::llround(tc.lr_decay_at * static_cast<double>(steps)));
}

/// Runs `steps` stage-1 updates on `model` and appends per-step losses.

void run_stage1(CodecModel& model, double lambda, Index lambda_index, Index steps,
                const std::vector<Tensor<float>>& images, Rng& rng, std::vector<double>& losses,
                std::ostream* log) {
  const TrainingConfig& tc = model.config().training;
  Adam opt(model.base_parameters(), tc.lr, tc.beta1, tc.beta2, 1e-8, tc.grad_clip);
  const Index decay_step = decay_start(tc, steps);
  for (Index step = 0; step < steps; ++step) {
    if (step == decay_step) opt.set_lr(tc.lr * tc.lr_decay);
    const Var<float> x(stack(sample_batch(images, tc.batch, tc.patch, rng)));
    opt.zero_grad();
    RdTerms t = rd_forward(model, x, lambda, rng);
    const double loss = t.loss.value()[0];
    check_finite(loss, "stage 1", step);
    backward(t.loss);
    const double gnorm = opt.step();
    losses.push_back(loss);
    if (log && (step % tc.log_every == 0 || step + 1 == steps)) {
      json j = {{"stage", 1},          {"lambda_index", lambda_index}, {"lambda", lambda},
                {"step", step},        {"loss", loss},                 {"bpp_y", t.bpp_y.value()[0]},
                {"bpp_z", t.bpp_z.value()[0]}, {"mse255", t.mse.value()[0]}, {"grad_norm", gnorm}};
      *log << j.dump() << std::endl;
    }
  }
}

}  // namespace

Adam::Adam(NamedParams<float> params, double lr, double beta1, double beta2, double eps, double clip)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), clip_(clip) {
  for (auto& p : params) {
    if (!p.second.requires_grad()) continue;
    m_.emplace_back(p.second.shape());
    v_.emplace_back(p.second.shape());
    params_.push_back(std::move(p));
  }
}

void Adam::zero_grad() {
  for (auto& [name, v] : params_) v.zero_grad();
}

double Adam::step() {
  double sq = 0.0;
  for (auto& [name, v] : params_) sq += v.grad().array().template cast<double>().square().sum();
  const double norm = std::sqrt(sq);
  const double factor = clip_ > 0.0 && norm > clip_ ? clip_ / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto step = static_cast<float>(lr_ / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = params_[i].second;
    const auto g = (p.grad().array() * static_cast<float>(factor)).eval();
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    p.mutable_value().array() -= step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
  }
  return norm;
}

Tensor<float> stack(const std::vector<Tensor<float>>& images) {
  if (images.empty()) throw ConfigError("empty batch");
  const Shape& s = images.front().shape();
  Tensor<float> out(Shape{static_cast<Index>(images.size()), s[0], s[1], s[2]});
  const Index n = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ConfigError("batch images differ in shape");
    std::copy_n(images[i].data(), n, out.data() + static_cast<Index>(i) * n);
  }
  return out;
}

RdTerms rd_forward(const CodecModel& model, const Var<float>& x, double lambda, Rng& rng) {
  const double pixels = static_cast<double>(x.dim(0) * x.dim(1) * x.dim(2));
  const Var<float> y = model.analyze(x);
  const Var<float> z = model.hyper_analyze(y);
  const Var<float> z_t = add_quantization_noise(z, rng);
  const Var<float> zero(Tensor<float>(z.shape()));
  const Var<float> bits_z = likelihood_bits(z_t, zero, broadcast_channels(model.z_scales(), z.shape()));
  const Var<float> y_t = add_quantization_noise(y, rng);
  auto [mu, sigma] = model.hyper_synthesize(z_t);
  const Var<float> bits_y = likelihood_bits(y_t, mu, sigma);
  RdTerms t;
  t.x_hat = model.synthesize(y_t);
  t.bpp_y = scale(sum(bits_y), static_cast<float>(1.0 / pixels));
  t.bpp_z = scale(sum(bits_z), static_cast<float>(1.0 / pixels));
  t.mse = mse_255(x, t.x_hat);
  t.loss = rd_loss(x, t.x_hat, t.bpp_y, t.bpp_z, lambda);
  return t;
}

RdEval evaluate_rd(const CodecModel& model, const std::vector<Tensor<float>>& images, double lambda) {
  RdEval e;
  for (const auto& img : images) {
    const Tensor<float> padded = reflect_pad(img, model.config().pad_multiple());
    const LatentCode code = compute_latents(model, padded);
    const auto [bz, by] = model_bits(code);
    const Image rec = reconstruct(model, code.y_hat, DecodeMode::kStandard, img.dim(0), img.dim(1));
    const double bpp = (bz + by) / static_cast<double>(img.dim(0) * img.dim(1));
    const double mse = (rec.array() - img.array()).template cast<double>().square().mean();
    e.bpp += bpp;
    e.mse += mse * 255.0 * 255.0;
    e.psnr += psnr(img, rec);
    e.loss += bpp + lambda * mse * 255.0 * 255.0;
  }
  const double n = static_cast<double>(images.size());
  e.bpp /= n;
  e.mse /= n;
  e.psnr /= n;
  e.loss /= n;
  return e;
}

std::vector<Tensor<float>> training_images(const TrainingConfig& tc) {
  std::vector<ImageSource> src = tc.clean_dir.empty()
                                     ? synthetic_images(tc.num_images, tc.image_size, tc.seed)
                                     : load_image_dir(tc.clean_dir);
  std::vector<Tensor<float>> out;
  for (auto& s : src) {
    if (s.image.dim(0) >= tc.patch && s.image.dim(1) >= tc.patch) out.push_back(std::move(s.image));
  }
  if (out.empty()) throw IoError("no usable training images");
  return out;
}

PairSet holdout_pairs(const TrainingConfig& tc) {
  const NoiseParams np = NoiseParams::from_profile(tc.noise, mix_seed(tc.seed ^ 0x686F6C64ull));
  if (tc.clean_dir.empty()) {
    const auto src = synthetic_images(tc.holdout, tc.image_size, mix_seed(tc.seed + 0x5EED));
    return make_pairs(src, np, tc.patch, tc.holdout);
  }
  return make_pairs(tc.clean_dir, np, tc.patch, tc.holdout);
}

std::string stage_checkpoint_name(int stage, Index lambda_index) {
  return "stage" + std::to_string(stage) + "_lambda" + std::to_string(lambda_index) + ".ckpt";
}

Stage1Result train_stage1(const ModelConfig& cfg, const std::vector<Tensor<float>>& images,
                          const std::string& out_dir, std::ostream* log) {
  cfg.validate();
  if (images.empty()) throw ConfigError("stage 1 needs training images");
  std::filesystem::create_directories(out_dir);
  const TrainingConfig& tc = cfg.training;
  Rng rng(tc.seed);
  CodecModel model(cfg, tc.seed);
  Stage1Result res;
  run_stage1(model, cfg.lambda(), cfg.lambda_index, tc.stage1_steps, images, rng, res.losses, log);
  res.base_steps = tc.stage1_steps;
  const auto save = [&](CodecModel& m, Index li) {
    m.mutable_config().lambda_index = li;
    const std::string path = (std::filesystem::path(out_dir) / stage_checkpoint_name(1, li)).string();
    save_checkpoint(m, 1, path);
    res.checkpoints.push_back(path);
    res.lambda_indices.push_back(li);
  };
  save(model, cfg.lambda_index);
  if (tc.stage1_finetune_steps <= 0) return res;
  const std::string base_path = res.checkpoints.front();
  for (Index li = 0; li < static_cast<Index>(cfg.lambdas.size()); ++li) {
    if (li == cfg.lambda_index) continue;
    CodecModel ft = load_checkpoint(base_path);
    run_stage1(ft, cfg.lambdas[static_cast<std::size_t>(li)], li, tc.stage1_finetune_steps, images, rng,
               res.losses, log);
    save(ft, li);
  }
  return res;
}

Stage2Result train_stage2(const ModelConfig& cfg_in, const std::string& stage1_ckpt,
                          const std::vector<Tensor<float>>& images, const std::string& out_path,
                          std::ostream* log) {
  CheckpointInfo info;
  {
    // reads header + config; tensors are loaded below by name
    load_checkpoint(stage1_ckpt, &info);
  }
  ModelConfig cfg = cfg_in;
  cfg.lambda_index = info.config.lambda_index;
  cfg.lambdas = info.config.lambdas;
  cfg.validate();
  if (!cfg.has_lrm() && !cfg.has_prompts()) throw ConfigError("stage 2 needs at least one add-on module");
  if (images.empty()) throw ConfigError("stage 2 needs training images");
  const TrainingConfig& tc = cfg.training;
  CodecModel model(cfg, tc.seed);
  load_base_parameters(model, stage1_ckpt);
  const NamedParams<float> base = model.base_parameters();
  set_requires_grad(base, false);
  Stage2Result res;
  res.base_hash_before = parameter_hash(base);

  Rng rng(mix_seed(tc.seed + 2));
  Adam opt(model.addon_parameters(), tc.lr_stage2, tc.beta1, tc.beta2, 1e-8, tc.grad_clip);
  const Index decay_step = decay_start(tc, tc.stage2_steps);
  for (Index step = 0; step < tc.stage2_steps; ++step) {
    if (step == decay_step) opt.set_lr(tc.lr_stage2 * tc.lr_decay);
    std::vector<Tensor<float>> clean = sample_batch(images, tc.batch, tc.patch, rng);
    std::vector<Tensor<float>> noisy;
    for (const auto& c : clean) noisy.push_back(add_noise(c, NoiseParams::from_profile(tc.noise, rng())));
    const Var<float> xc(stack(clean));
    Var<float> y;
    {
      NoGradGuard no_grad;
      y = model.analyze(Var<float>(stack(noisy)));
    }
    opt.zero_grad();
    const Var<float> y_t = add_quantization_noise(y, rng);
    const Var<float> x_hat = model.synthesize_denoised(y_t);
    const Var<float> loss = l1_loss(xc, x_hat);
    const double lv = loss.value()[0];
    check_finite(lv, "stage 2", step);
    backward(loss);
    const double gnorm = opt.step();
    res.losses.push_back(lv);
    if (log && (step % tc.log_every == 0 || step + 1 == tc.stage2_steps)) {
      json j = {{"stage", 2}, {"lambda_index", cfg.lambda_index}, {"step", step}, {"l1", lv}, {"grad_norm", gnorm}};
      *log << j.dump() << std::endl;
    }
  }
  res.base_hash_after = parameter_hash(model.base_parameters());
  if (res.base_hash_after != res.base_hash_before) {
    throw std::logic_error("stage 2 modified frozen base-codec parameters");
  }
  set_requires_grad(base, true);
  save_checkpoint(model, 2, out_path);
  res.checkpoint = out_path;
  return res;
}

}  // namespace jdnd
