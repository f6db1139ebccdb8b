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

// Poissonian-Gaussian noise, z = clip(x + sqrt(a·x + b)·n, 0, 1), and
// clean/noisy patch pairs.

#ifndef JDND_NOISE_HPP_
#define JDND_NOISE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/config.hpp"
#include "jdnd/tensor.hpp"

namespace jdnd {

/// Invalid noise parameters.
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct NoiseParams {
  double a = 0.01;
  double b = 0.0005;
  std::uint64_t seed = 0;

  static NoiseParams from_profile(const NoiseProfile& p, std::uint64_t seed) { return {p.a, p.b, seed}; }
};

/// Deterministic per (x, p). When `pre_clip` is given it receives the
/// unclipped sample.
Tensor<float> add_noise(const Tensor<float>& x, const NoiseParams& p, Tensor<float>* pre_clip = nullptr);

/// SplitMix64 step, used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed);

struct ImageSource {
  std::string name;  // file path, or "synthetic:<size>:<seed>"
  Tensor<float> image;
};

/// Readable images of a directory in name order; unreadable files are skipped
/// with a warning on stderr.
std::vector<ImageSource> load_image_dir(const std::string& dir);

/// Procedural test image: gradient background, flat and shaded shapes,
/// stripes. A function of (size, seed) only.
Tensor<float> synthetic_image(Index size, std::uint64_t seed);
std::vector<ImageSource> synthetic_images(Index count, Index size, std::uint64_t seed);

/// Loads a source by name (a path or a synthetic spec).
Tensor<float> load_source(const std::string& name);

struct PairRecord {
  std::string source;
  Index y = 0, x = 0, patch = 0;
  std::uint64_t seed = 0;
  double a = 0.0, b = 0.0;
};

struct PairSet {
  std::vector<PairRecord> records;
  std::vector<Tensor<float>> clean;
  std::vector<Tensor<float>> noisy;

  std::size_t size() const { return records.size(); }
};

/// `count` seeded random patch×patch crops with noise. Pair i uses seed
/// mix_seed(p.seed + i) for both crop and noise.
PairSet make_pairs(const std::vector<ImageSource>& sources, const NoiseParams& p, Index patch, Index count);
/// Throws IoError when the directory yields no usable image.
PairSet make_pairs(const std::string& clean_dir, const NoiseParams& p, Index patch, Index count);

/// Rebuilds the pairs described by a manifest.
PairSet regenerate(const std::vector<PairRecord>& records);

/// One JSON object per line.
void write_manifest(const std::vector<PairRecord>& records, const std::string& path);
std::vector<PairRecord> read_manifest(const std::string& path);

}  // namespace jdnd

#endif  // JDND_NOISE_HPP_
