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

#include "jdnd/codec.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace jdnd {
namespace {

Index mirror(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n - 2;
  i %= period;
  return i < n ? i : period - i;
}

Tensor<float> round_clamp(const Tensor<float>& v) {
  Tensor<float> out = quantize(v, QuantMode::kInfer);
  // + 0 folds -0 into +0 so ŷ matches the decoder bit for bit
  out.array() = out.array().max(float(-kAlphabetRadius)).min(float(kAlphabetRadius)) + 0.0f;
  return out;
}

std::vector<std::int32_t> to_symbols(const Tensor<float>& v) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v[i]);
  return out;
}

/// The ẑ prior has one table per channel.
std::vector<QuantizedCdf> channel_tables(const Tensor<float>& z_sigma) {
  std::vector<QuantizedCdf> out;
  for (Index c = 0; c < z_sigma.size(); ++c) out.push_back(gaussian_cdf(0.0, z_sigma[c]));
  return out;
}

constexpr char kCheckpointMagic[4] = {'J', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
  const auto n = read_pod<std::uint32_t>(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated checkpoint " + path);
  return s;
}

struct CheckpointData {
  CheckpointInfo info;
  std::map<std::string, Tensor<float>> tensors;
};

CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError("not a checkpoint: " + path);
  if (read_pod<std::uint32_t>(in, path) != kCheckpointVersion) throw IoError("unsupported checkpoint version: " + path);
  CheckpointData data;
  data.info.base_hash = read_pod<std::uint64_t>(in, path);
  data.info.stage = read_pod<std::uint32_t>(in, path);
  data.info.config = config_from_json(read_string(in, path));
  if (data.info.config.hash() != data.info.base_hash) {
    throw HashMismatchError("checkpoint config does not match its stored hash: " + path);
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in, path);
    const auto rank = read_pod<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<Index>(read_pod<std::int64_t>(in, path)));
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint " + path);
    data.tensors.emplace(std::move(name), std::move(t));
  }
  return data;
}

void assign(const NamedParams<float>& params, const std::map<std::string, Tensor<float>>& tensors,
            const std::string& path) {
  for (const auto& [name, v] : params) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint " + path + " lacks tensor " + name);
    if (it->second.shape() != v.shape()) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_string(it->second.shape()) +
                    ", model expects " + shape_string(v.shape()));
    }
    v.node()->value = it->second;
  }
}

}  // namespace

std::string to_string(DecodeMode m) { return m == DecodeMode::kDenoise ? "denoise" : "standard"; }

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "standard") return DecodeMode::kStandard;
  if (s == "denoise") return DecodeMode::kDenoise;
  throw ConfigError("unknown decode mode '" + s + "' (standard|denoise)");
}

Image reflect_pad(const Image& x, Index multiple) {
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Index ph = (h + multiple - 1) / multiple * multiple;
  const Index pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return x;
  Image out(Shape{ph, pw, c});
  for (Index i = 0; i < ph; ++i)
    for (Index j = 0; j < pw; ++j)
      for (Index k = 0; k < c; ++k) out.at({i, j, k}) = x.at({mirror(i, h), mirror(j, w), k});
  return out;
}

Image crop(const Image& x, Index height, Index width) {
  if (height > x.dim(0) || width > x.dim(1)) throw ConfigError("crop larger than image");
  if (height == x.dim(0) && width == x.dim(1)) return x;
  const Index c = x.dim(2);
  Image out(Shape{height, width, c});
  for (Index i = 0; i < height; ++i)
    std::copy_n(x.data() + i * x.dim(1) * c, width * c, out.data() + i * width * c);
  return out;
}

Var<float> as_batch(const Image& x) {
  if (x.rank() != 3 || x.dim(2) != 3) throw ConfigError("expected an [H,W,3] image, got " + shape_string(x.shape()));
  if (!x.all_finite()) throw NumericError("image has non-finite values");
  return Var<float>(x.reshaped({1, x.dim(0), x.dim(1), 3}));
}

Image from_batch(const Tensor<float>& x, Index index) {
  const Index n = x.dim(1) * x.dim(2) * x.dim(3);
  Image out(Shape{x.dim(1), x.dim(2), x.dim(3)});
  std::copy_n(x.data() + index * n, n, out.data());
  return out;
}

LatentCode compute_latents(const CodecModel& model, const Image& padded) {
  NoGradGuard no_grad;
  LatentCode code;
  const Var<float> y = model.analyze(as_batch(padded));
  code.y_hat = round_clamp(y.value());
  code.z_hat = round_clamp(model.hyper_analyze(y).value());
  auto [mu, sigma] = model.hyper_synthesize(Var<float>(code.z_hat));
  code.mu = mu.value();
  code.sigma = sigma.value();
  code.z_sigma = model.z_scales().value();
  return code;
}

std::pair<double, double> model_bits(const LatentCode& code) {
  const double bz = factorized_bits(code.z_hat, code.z_sigma).array().template cast<double>().sum();
  const double by = gaussian_bits(code.y_hat, GaussianParams<float>{code.mu, code.sigma})
                        .array().template cast<double>().sum();
  return {bz, by};
}

std::vector<std::uint8_t> encode_z(const Tensor<float>& z_hat, const Tensor<float>& z_sigma) {
  const auto tables = channel_tables(z_sigma);
  const auto c = static_cast<std::size_t>(z_sigma.size());
  return range_encode(to_symbols(z_hat), [&](std::size_t i) { return tables[i % c]; });
}

std::vector<std::uint8_t> encode_y(const Tensor<float>& y_hat, const Tensor<float>& mu,
                                   const Tensor<float>& sigma) {
  return range_encode(to_symbols(y_hat), [&](std::size_t i) {
    return gaussian_cdf(mu[static_cast<Index>(i)], sigma[static_cast<Index>(i)]);
  });
}

Tensor<float> decode_z(const std::vector<std::uint8_t>& bytes, const Tensor<float>& z_sigma, Shape shape) {
  const auto tables = channel_tables(z_sigma);
  const auto c = static_cast<std::size_t>(z_sigma.size());
  Tensor<float> out(std::move(shape));
  const auto s = range_decode(bytes, [&](std::size_t i) { return tables[i % c]; },
                              static_cast<std::size_t>(out.size()));
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<float>(s[static_cast<std::size_t>(i)]);
  return out;
}

Tensor<float> decode_y(const std::vector<std::uint8_t>& bytes, const Tensor<float>& mu,
                       const Tensor<float>& sigma) {
  Tensor<float> out(mu.shape());
  const auto s = range_decode(
      bytes,
      [&](std::size_t i) { return gaussian_cdf(mu[static_cast<Index>(i)], sigma[static_cast<Index>(i)]); },
      static_cast<std::size_t>(out.size()));
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<float>(s[static_cast<std::size_t>(i)]);
  return out;
}

Bitstream encode_image(const Image& x, const CodecModel& model) {
  const ModelConfig& cfg = model.config();
  if (x.rank() != 3 || x.dim(2) != 3 || x.dim(0) < 1 || x.dim(1) < 1) {
    throw ConfigError("expected an [H,W,3] image, got " + shape_string(x.shape()));
  }
  const Image padded = reflect_pad(x, cfg.pad_multiple());
  const LatentCode code = compute_latents(model, padded);
  Bitstream bs;
  bs.header.config_hash = cfg.hash();
  bs.header.lambda_index = static_cast<std::uint8_t>(cfg.lambda_index);
  bs.header.flags = padded.shape() != x.shape() ? kFlagPadded : 0;
  bs.header.height = static_cast<std::uint32_t>(x.dim(0));
  bs.header.width = static_cast<std::uint32_t>(x.dim(1));
  bs.z_payload = encode_z(code.z_hat, code.z_sigma);
  bs.y_payload = encode_y(code.y_hat, code.mu, code.sigma);
  return bs;
}

Image reconstruct(const CodecModel& model, const Tensor<float>& y_hat, DecodeMode mode,
                  Index height, Index width) {
  NoGradGuard no_grad;
  const Var<float> y(y_hat);
  const Var<float> x = mode == DecodeMode::kDenoise ? model.synthesize_denoised(y) : model.synthesize(y);
  Image img = crop(from_batch(x.value()), height, width);
  img.array() = img.array().max(0.0f).min(1.0f);
  return img;
}

DecodedImage decode_image(const Bitstream& bs, const CodecModel& model, DecodeMode mode) {
  const ModelConfig& cfg = model.config();
  if (bs.header.config_hash != cfg.hash()) {
    throw HashMismatchError("bitstream was encoded by a different base codec (hash mismatch)");
  }
  if (mode == DecodeMode::kDenoise && !cfg.has_lrm() && !cfg.has_prompts()) {
    throw ConfigError("denoise mode needs a checkpoint with add-on modules");
  }
  const Index mult = cfg.pad_multiple();
  const Index ph = (bs.header.height + mult - 1) / mult * mult;
  const Index pw = (bs.header.width + mult - 1) / mult * mult;
  const Index f = cfg.downsample_factor();
  const Shape z_shape{1, ph / f / 4, pw / f / 4, cfg.hyper_latent_channels};
  DecodedImage out;
  {
    NoGradGuard no_grad;
    const Tensor<float> z_sigma = model.z_scales().value();
    const Tensor<float> z_hat = decode_z(bs.z_payload, z_sigma, z_shape);
    auto [mu, sigma] = model.hyper_synthesize(Var<float>(z_hat));
    out.latent = decode_y(bs.y_payload, mu.value(), sigma.value());
  }
  out.image = reconstruct(model, out.latent, mode, bs.header.height, bs.header.width);
  return out;
}

void save_checkpoint(const CodecModel& model, std::uint32_t stage, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, model.config().hash());
  write_pod<std::uint32_t>(out, stage);
  write_string(out, config_to_json(model.config()));
  const auto params = model.parameters();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, v] : params) {
    write_string(out, name);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.shape().size()));
    for (Index d : v.shape()) write_pod<std::int64_t>(out, static_cast<std::int64_t>(d));
    out.write(reinterpret_cast<const char*>(v.value().data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw IoError("cannot write checkpoint " + path);
}

CodecModel load_checkpoint(const std::string& path, CheckpointInfo* info) {
  CheckpointData data = read_checkpoint_file(path);
  CodecModel model(data.info.config, data.info.config.training.seed);
  assign(model.parameters(), data.tensors, path);
  if (info) *info = data.info;
  return model;
}

void load_base_parameters(CodecModel& model, const std::string& path) {
  CheckpointData data = read_checkpoint_file(path);
  if (data.info.base_hash != model.config().hash()) {
    throw HashMismatchError("checkpoint " + path + " has a different base architecture");
  }
  assign(model.base_parameters(), data.tensors, path);
}

}  // namespace jdnd
