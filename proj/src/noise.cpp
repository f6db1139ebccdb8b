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

#include "jdnd/noise.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "json.hpp"
#include "jdnd/image_io.hpp"

namespace jdnd {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kSyntheticPrefix[] = "synthetic:";

struct Color {
  float c[3];
};

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {{u(rng), u(rng), u(rng)}};
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor<float> add_noise(const Tensor<float>& x, const NoiseParams& p, Tensor<float>* pre_clip) {
  if (!(p.a >= 0.0) || !(p.b >= 0.0)) {
    throw ParameterError("noise parameters must be non-negative (a=" + std::to_string(p.a) +
                         ", b=" + std::to_string(p.b) + ")");
  }
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<float> out(x.shape());
  if (pre_clip) *pre_clip = Tensor<float>(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double z = v + std::sqrt(std::max(p.a * v + p.b, 0.0)) * n(rng);
    if (pre_clip) (*pre_clip)[i] = static_cast<float>(z);
    out[i] = static_cast<float>(std::clamp(z, 0.0, 1.0));
  }
  return out;
}

std::vector<ImageSource> load_image_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageSource> out;
  for (const auto& f : files) {
    try {
      out.push_back({f.string(), read_image(f.string())});
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << '\n';
    }
  }
  return out;
}

Tensor<float> synthetic_image(Index size, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> img(Shape{size, size, 3});
  const Color c0 = random_color(rng), c1 = random_color(rng);
  const float angle = u(rng) * 6.2831853f;
  const float dx = std::cos(angle), dy = std::sin(angle);
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j) {
      const float t = 0.5f + 0.5f * ((static_cast<float>(j) / size - 0.5f) * dx + (static_cast<float>(i) / size - 0.5f) * dy);
      for (int k = 0; k < 3; ++k) img.at({i, j, k}) = c0.c[k] * (1 - t) + c1.c[k] * t;
    }
  // soft outlines: a logistic edge a few pixels wide
  constexpr float edge = 1.6f;
  std::uniform_int_distribution<int> nshapes(3, 7);
  const int shapes = nshapes(rng);
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(u(rng) * 3.0f);
    const Color col = random_color(rng);
    const float cy = u(rng) * size, cx = u(rng) * size;
    const float ry = (0.1f + 0.3f * u(rng)) * size, rx = (0.1f + 0.3f * u(rng)) * size;
    const float period = (0.15f + 0.35f * u(rng)) * size;
    const float shade = 0.3f * (u(rng) - 0.5f);
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < size; ++j) {
        const float py = (static_cast<float>(i) - cy) / ry, px = (static_cast<float>(j) - cx) / rx;
        float dist = 0.0f;  // approximate signed distance to the outline, pixels
        float mod = 1.0f;
        if (kind == 0) {  // ellipse with radial shading
          const float r2 = px * px + py * py;
          dist = (std::sqrt(r2) - 1.0f) * std::min(rx, ry);
          mod = 1.0f + shade * (1.0f - std::min(r2, 1.0f));
        } else {  // rectangle, plain or striped
          dist = std::max((std::abs(px) - 1.0f) * rx, (std::abs(py) - 1.0f) * ry);
          if (kind == 2) mod = 1.0f + 0.25f * std::sin(6.2831853f * static_cast<float>(i + j) / period);
        }
        const float alpha = 1.0f / (1.0f + std::exp(dist / edge));
        if (alpha < 1e-4f) continue;
        for (int k = 0; k < 3; ++k) {
          float& v = img.at({i, j, k});
          v = (1.0f - alpha) * v + alpha * std::clamp(col.c[k] * mod, 0.0f, 1.0f);
        }
      }
  }
  return img;
}

std::vector<ImageSource> synthetic_images(Index count, Index size, std::uint64_t seed) {
  std::vector<ImageSource> out;
  for (Index i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed + static_cast<std::uint64_t>(i));
    out.push_back({kSyntheticPrefix + std::to_string(size) + ":" + std::to_string(s), synthetic_image(size, s)});
  }
  return out;
}

Tensor<float> load_source(const std::string& name) {
  if (name.rfind(kSyntheticPrefix, 0) == 0) {
    const std::string rest = name.substr(sizeof(kSyntheticPrefix) - 1);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw IoError("bad synthetic source name " + name);
    return synthetic_image(std::stoll(rest.substr(0, colon)), std::stoull(rest.substr(colon + 1)));
  }
  return read_image(name);
}

namespace {

void append_pair(PairSet& set, const PairRecord& r, const Tensor<float>& src) {
  const Index c = src.dim(2), w = src.dim(1);
  Tensor<float> clean(Shape{r.patch, r.patch, c});
  for (Index i = 0; i < r.patch; ++i)
    std::copy_n(src.data() + ((r.y + i) * w + r.x) * c, r.patch * c, clean.data() + i * r.patch * c);
  NoiseParams np{r.a, r.b, mix_seed(r.seed ^ 0x6E6F697365ull)};
  set.noisy.push_back(add_noise(clean, np));
  set.clean.push_back(std::move(clean));
  set.records.push_back(r);
}

}  // namespace

PairSet make_pairs(const std::vector<ImageSource>& sources, const NoiseParams& p, Index patch, Index count) {
  if (p.a < 0 || p.b < 0) throw ParameterError("noise parameters must be non-negative");
  std::vector<const ImageSource*> usable;
  for (const auto& s : sources) {
    if (s.image.dim(0) >= patch && s.image.dim(1) >= patch) {
      usable.push_back(&s);
    } else {
      std::cerr << "warning: skipping " << s.name << ": smaller than patch " << patch << '\n';
    }
  }
  if (sources.empty()) throw IoError("no input images");
  if (usable.empty()) throw ConfigError("no images large enough for " + std::to_string(patch) + "px patches");
  PairSet set;
  for (Index i = 0; i < count; ++i) {
    PairRecord r;
    r.seed = mix_seed(p.seed + static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(r.seed);
    const ImageSource& src = *usable[static_cast<std::size_t>(rng() % usable.size())];
    r.source = src.name;
    r.patch = patch;
    r.y = static_cast<Index>(rng() % static_cast<std::uint64_t>(src.image.dim(0) - patch + 1));
    r.x = static_cast<Index>(rng() % static_cast<std::uint64_t>(src.image.dim(1) - patch + 1));
    r.a = p.a;
    r.b = p.b;
    append_pair(set, r, src.image);
  }
  return set;
}

PairSet make_pairs(const std::string& clean_dir, const NoiseParams& p, Index patch, Index count) {
  return make_pairs(load_image_dir(clean_dir), p, patch, count);
}

PairSet regenerate(const std::vector<PairRecord>& records) {
  PairSet set;
  std::string last;
  Tensor<float> src;
  for (const auto& r : records) {
    if (r.source != last) {
      src = load_source(r.source);
      last = r.source;
    }
    if (r.y < 0 || r.x < 0 || r.y + r.patch > src.dim(0) || r.x + r.patch > src.dim(1)) {
      throw IoError("manifest crop outside " + r.source);
    }
    append_pair(set, r, src);
  }
  return set;
}

void write_manifest(const std::vector<PairRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& r : records) {
    json j = {{"source", r.source}, {"y", r.y},       {"x", r.x}, {"patch", r.patch},
              {"seed", r.seed},     {"a", r.a},       {"b", r.b}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("cannot write manifest " + path);
}

std::vector<PairRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::vector<PairRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PairRecord r;
      r.source = j.at("source").get<std::string>();
      r.y = j.at("y").get<Index>();
      r.x = j.at("x").get<Index>();
      r.patch = j.at("patch").get<Index>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.a = j.at("a").get<double>();
      r.b = j.at("b").get<double>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError("bad manifest record at " + path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace jdnd
