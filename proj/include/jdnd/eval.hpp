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

// Metrics, decoder-side complexity accounting and rate-distortion export.

#ifndef JDND_EVAL_HPP_
#define JDND_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "jdnd/bitstream.hpp"
#include "jdnd/config.hpp"
#include "jdnd/tensor.hpp"

namespace jdnd {

inline constexpr double kPsnrCap = 100.0;

/// 10·log10(1/MSE) on [0, 1] values, capped at 100 dB.
double psnr(const Tensor<float>& reference, const Tensor<float>& test);

/// 8 · (header + payload bytes) / (H · W).
inline double bpp(const Bitstream& bs) { return bits_per_pixel(bs); }

// Complexity. MACs follow the multiply-accumulate convention: convolution
// k²·Cin·Cout·Hout·Wout/groups, transposed convolution k²·Cin·Cout·Hin·Win,
// linear rows·in·out, attention 2·N·L·C per window (logits and weighted
// sum). Activations, norms and softmax are not counted.

inline std::int64_t conv_macs(std::int64_t k, std::int64_t cin, std::int64_t cout,
                              std::int64_t hout, std::int64_t wout, std::int64_t groups = 1) {
  return k * k * cin * cout * hout * wout / groups;
}
inline std::int64_t conv_params(std::int64_t k, std::int64_t cin, std::int64_t cout,
                                std::int64_t groups = 1, bool bias = true) {
  return k * k * cin * cout / groups + (bias ? cout : 0);
}
inline std::int64_t linear_macs(std::int64_t rows, std::int64_t in, std::int64_t out) {
  return rows * in * out;
}

/// The decoder-side variants of the ablation: base, lrm-light, lrm, prompt,
/// prompt-heavy, lrm-light+prompt (alias light), lrm+prompt (alias full),
/// lrm+prompt-heavy.
const std::vector<std::string>& complexity_variants();
/// Copy of `cfg` with the add-on flags of `variant`.
ModelConfig apply_variant(const ModelConfig& cfg, const std::string& variant);

struct ModuleCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct ComplexityReport {
  std::string variant;
  Index height = 0, width = 0;
  std::vector<ModuleCost> modules;  // g_s, h_s, prior_z, lrm, g_p, pstb
  std::int64_t total_params = 0, total_macs = 0;
  std::int64_t base_params = 0, base_macs = 0;

  double kmacs_per_pixel() const {
    return static_cast<double>(total_macs) / static_cast<double>(height * width) / 1000.0;
  }
  double base_kmacs_per_pixel() const {
    return static_cast<double>(base_macs) / static_cast<double>(height * width) / 1000.0;
  }
  double params_overhead_pct() const {
    return 100.0 * static_cast<double>(total_params - base_params) / static_cast<double>(base_params);
  }
  double macs_overhead_pct() const {
    return 100.0 * static_cast<double>(total_macs - base_macs) / static_cast<double>(base_macs);
  }
  const ModuleCost& module(const std::string& name) const;
  std::string to_json() const;
};

/// Closed-form decoder-side counts for a denoising reconstruction of an
/// H×W image (padded as the codec pads). Base = g_s + h_s + ẑ prior.
ComplexityReport count_complexity(const ModelConfig& cfg, Index height, Index width,
                                  const std::string& variant);

struct RDPoint {
  std::string image;
  std::string mode;  // standard | denoise
  double lambda = 0;
  double bpp = 0;
  double psnr = 0;
};

/// CSV (image,mode,lambda,bpp,psnr) sorted by bpp, plus an SVG plot of PSNR
/// against bpp per mode next to it (same stem, .svg). Returns the SVG path.
std::string export_rd(std::vector<RDPoint> points, const std::string& csv_path);
std::vector<RDPoint> read_rd_csv(const std::string& path);

}  // namespace jdnd

#endif  // JDND_EVAL_HPP_
