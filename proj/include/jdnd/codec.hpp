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

// Image ↔ bitstream, and model checkpoints.

#ifndef JDND_CODEC_HPP_
#define JDND_CODEC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/bitstream.hpp"
#include "jdnd/model.hpp"

namespace jdnd {

/// Images are [H, W, 3] float tensors with values in [0, 1].
using Image = Tensor<float>;

enum class DecodeMode { kStandard, kDenoise };

std::string to_string(DecodeMode m);
DecodeMode parse_decode_mode(const std::string& s);

/// Mirror padding (edge not repeated, periodic for pads wider than the
/// image) on the bottom/right up to the next multiple of `multiple`.
Image reflect_pad(const Image& x, Index multiple);
Image crop(const Image& x, Index height, Index width);

/// Adds / strips the leading batch axis.
Var<float> as_batch(const Image& x);
Image from_batch(const Tensor<float>& x, Index index = 0);

/// Integer latents and hyper-latents of one image, plus the entropy model
/// that codes them.
struct LatentCode {
  Tensor<float> y_hat;  // [1, h, w, M]
  Tensor<float> z_hat;  // [1, h/4, w/4, M']
  Tensor<float> mu, sigma;
  Tensor<float> z_sigma;  // [M']
};

/// analyze → round → h_a → round → h_s, on a padded image.
LatentCode compute_latents(const CodecModel& model, const Image& padded);

/// Model bits of a code: (Σ bits ẑ, Σ bits ŷ).
std::pair<double, double> model_bits(const LatentCode& code);

std::vector<std::uint8_t> encode_z(const Tensor<float>& z_hat, const Tensor<float>& z_sigma);
std::vector<std::uint8_t> encode_y(const Tensor<float>& y_hat, const Tensor<float>& mu,
                                   const Tensor<float>& sigma);
Tensor<float> decode_z(const std::vector<std::uint8_t>& bytes, const Tensor<float>& z_sigma, Shape shape);
Tensor<float> decode_y(const std::vector<std::uint8_t>& bytes, const Tensor<float>& mu,
                       const Tensor<float>& sigma);

Bitstream encode_image(const Image& x, const CodecModel& model);

struct DecodedImage {
  Image image;           // [H, W, 3] clipped to [0, 1]
  Tensor<float> latent;  // ŷ exactly as recovered from the bitstream
};

/// Throws HashMismatchError when the bitstream was made by another base.
DecodedImage decode_image(const Bitstream& bs, const CodecModel& model,
                          DecodeMode mode = DecodeMode::kStandard);

/// Synthesis from a recovered latent in the given mode, cropped and clipped.
Image reconstruct(const CodecModel& model, const Tensor<float>& y_hat, DecodeMode mode,
                  Index height, Index width);

// Checkpoints: "JDCK" | version u32 | base hash u64 | stage u32 |
// config JSON | named float32 tensors.

struct CheckpointInfo {
  ModelConfig config;
  std::uint32_t stage = 0;
  std::uint64_t base_hash = 0;
};

void save_checkpoint(const CodecModel& model, std::uint32_t stage, const std::string& path);
/// Builds a model from the stored config and loads every stored tensor.
CodecModel load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);
/// Copies the base-codec tensors of a checkpoint into `model`. Throws
/// HashMismatchError when the base architectures differ.
void load_base_parameters(CodecModel& model, const std::string& path);

}  // namespace jdnd

#endif  // JDND_CODEC_HPP_
