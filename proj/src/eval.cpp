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

#include "jdnd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace jdnd {
namespace {

using json = nlohmann::json;
using I64 = std::int64_t;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// One Swin layer on T tokens of C channels.
I64 swin_layer_macs(I64 tokens, I64 c, I64 window, I64 mlp_ratio) {
  const I64 n = window * window;
  return linear_macs(tokens, c, 3 * c) + 2 * tokens * n * c + linear_macs(tokens, c, c) +
         linear_macs(tokens, c, c * mlp_ratio) + linear_macs(tokens, c * mlp_ratio, c);
}

I64 swin_layer_params(I64 c, I64 heads, I64 window, I64 mlp_ratio) {
  const I64 span = 2 * window - 1;
  const I64 hidden = c * mlp_ratio;
  return 2 * c                      // norm1
         + 3 * (c * c + c)          // q, k, v
         + span * span * heads      // relative position table
         + c * c + c                // proj
         + 2 * c                    // norm2
         + c * hidden + hidden      // fc1
         + hidden * c + c;          // fc2
}

/// Extra work of one prompt-adapted layer: K/V rows for T/4 prompts and N/4
/// extra key columns per query.
I64 prompt_layer_macs(I64 tokens, I64 c, I64 window) {
  const I64 n = window * window;
  return 2 * linear_macs(tokens / 4, c, c) + 2 * tokens * (n / 4) * c;
}

}  // namespace

double psnr(const Tensor<float>& reference, const Tensor<float>& test) {
  if (reference.shape() != test.shape()) {
    throw ConfigError("psnr: shape mismatch " + shape_string(reference.shape()) + " vs " +
                      shape_string(test.shape()));
  }
  const double mse = (reference.array().template cast<double>() - test.array().template cast<double>())
                         .square()
                         .mean();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

const std::vector<std::string>& complexity_variants() {
  static const std::vector<std::string> v = {"base",          "lrm-light",        "lrm",
                                             "prompt",        "prompt-heavy",     "lrm-light+prompt",
                                             "lrm+prompt",    "lrm+prompt-heavy"};
  return v;
}

ModelConfig apply_variant(const ModelConfig& cfg, const std::string& variant_in) {
  std::string variant = variant_in;
  if (variant == "full") variant = "lrm+prompt";
  if (variant == "light") variant = "lrm-light+prompt";
  if (std::find(complexity_variants().begin(), complexity_variants().end(), variant) ==
      complexity_variants().end()) {
    throw ConfigError("unknown variant '" + variant_in + "'");
  }
  ModelConfig out = cfg;
  out.lrm = LrmVariant::kNone;
  out.prompt_targets = PromptTargets::kNone;
  std::stringstream ss(variant);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "lrm") out.lrm = LrmVariant::kNormal;
    if (part == "lrm-light") out.lrm = LrmVariant::kLight;
    if (part == "prompt") {
      out.prompt_targets = PromptTargets::kLastTwo;
      out.prompt_convs = PromptConvs::kGrouped16;
    }
    if (part == "prompt-heavy") {
      out.prompt_targets = PromptTargets::kAll;
      out.prompt_convs = PromptConvs::kFull;
    }
  }
  out.validate();
  return out;
}

const ModuleCost& ComplexityReport::module(const std::string& name) const {
  for (const auto& m : modules)
    if (m.name == name) return m;
  throw ConfigError("no module " + name + " in complexity report");
}

std::string ComplexityReport::to_json() const {
  json j;
  j["variant"] = variant;
  j["height"] = height;
  j["width"] = width;
  json mods = json::object();
  for (const auto& m : modules) mods[m.name] = {{"params", m.params}, {"macs", m.macs}};
  j["modules"] = mods;
  j["total_params"] = total_params;
  j["total_macs"] = total_macs;
  j["kmacs_per_pixel"] = kmacs_per_pixel();
  j["base_params"] = base_params;
  j["base_kmacs_per_pixel"] = base_kmacs_per_pixel();
  j["params_overhead_pct"] = params_overhead_pct();
  j["macs_overhead_pct"] = macs_overhead_pct();
  return j.dump(2);
}

ComplexityReport count_complexity(const ModelConfig& cfg_in, Index height, Index width,
                                  const std::string& variant) {
  if (height < 1 || width < 1) throw ConfigError("image size must be positive");
  const ModelConfig cfg = apply_variant(cfg_in, variant);
  const I64 mult = cfg.pad_multiple();
  const I64 ph = (height + mult - 1) / mult * mult, pw = (width + mult - 1) / mult * mult;
  const I64 f = cfg.downsample_factor();
  const I64 h = ph / f, w = pw / f;
  const I64 hz = h / 4, wz = w / 4;
  const I64 k = cfg.kernel, ws = cfg.window, m = cfg.latent_channels();
  const I64 hc = cfg.hyper_channels, mz = cfg.hyper_latent_channels;

  ComplexityReport r;
  r.variant = variant;
  r.height = height;
  r.width = width;

  ModuleCost gs{"g_s"};
  for (Index b = 0; b < cfg.stages(); ++b) {
    const I64 c = cfg.decoder_channels(b);
    const I64 next = b + 1 < cfg.stages() ? cfg.decoder_channels(b + 1) : 3;
    const I64 tokens = (h << b) * (w << b);
    for (Index l = 0; l < cfg.decoder_depth(b); ++l) {
      gs.macs += swin_layer_macs(tokens, c, ws, cfg.mlp_ratio);
      gs.params += swin_layer_params(c, cfg.decoder_heads(b), ws, cfg.mlp_ratio);
    }
    gs.macs += conv_macs(k, c, next, h << b, w << b);  // transposed: input size
    gs.params += conv_params(k, c, next);
  }

  ModuleCost hs{"h_s"};
  hs.macs = conv_macs(k, mz, hc, hz, wz) + conv_macs(k, hc, hc, 2 * hz, 2 * wz) + conv_macs(3, hc, 2 * m, h, w);
  hs.params = conv_params(k, mz, hc) + conv_params(k, hc, hc) + conv_params(3, hc, 2 * m);

  ModuleCost prior{"prior_z", mz, 0};

  ModuleCost lrm{"lrm"};
  if (cfg.has_lrm()) {
    const I64 g = cfg.lrm == LrmVariant::kLight ? 16 : 1;
    const I64 s = cfg.sft_hidden;
    const I64 sft_macs = 2 * (conv_macs(1, m, s, h, w) + conv_macs(3, s, m, h, w));
    const I64 sft_params = 2 * (conv_params(1, m, s) + conv_params(3, s, m));
    lrm.macs = 2 * sft_macs + 2 * conv_macs(3, m, m, h, w, g);
    lrm.params = 2 * sft_params + 2 * conv_params(3, m, m, g);
  }

  ModuleCost gp{"g_p"};
  ModuleCost pstb{"pstb"};
  if (cfg.has_prompts()) {
    const I64 g = cfg.prompt_convs == PromptConvs::kGrouped16 ? cfg.prompt_groups : 1;
    const I64 hid = cfg.prompt_hidden;
    const auto targets = cfg.prompt_target_blocks();
    gp.macs += conv_macs(3, m, hid, h, w, g);
    gp.params += conv_params(3, m, hid, g);
    const I64 levels = *std::max_element(targets.begin(), targets.end()) - 1;
    for (I64 i = 0; i < levels; ++i) {
      gp.macs += conv_macs(3, hid, 4 * hid, h << i, w << i, g);
      gp.params += conv_params(3, hid, 4 * hid, g);
    }
    for (Index b : targets) {
      const I64 c = cfg.decoder_channels(b);
      const I64 out_h = b == 0 ? h / 2 : h << (b - 1), out_w = b == 0 ? w / 2 : w << (b - 1);
      gp.macs += conv_macs(3, hid, c, out_h, out_w, g);
      gp.params += conv_params(3, hid, c, g);
      const I64 tokens = (h << b) * (w << b);
      pstb.macs += cfg.decoder_depth(b) * prompt_layer_macs(tokens, c, ws);
    }
  }

  r.modules = {gs, hs, prior, lrm, gp, pstb};
  for (const auto& mc : r.modules) {
    r.total_params += mc.params;
    r.total_macs += mc.macs;
  }
  r.base_params = gs.params + hs.params + prior.params;
  r.base_macs = gs.macs + hs.macs + prior.macs;
  return r;
}

std::string export_rd(std::vector<RDPoint> points, const std::string& csv_path) {
  if (points.empty()) throw ConfigError("export_rd: no points");
  std::stable_sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write " + csv_path);
    out << "image,mode,lambda,bpp,psnr\n";
    for (const auto& p : points) {
      if (p.image.find_first_of(",\n") != std::string::npos) throw ConfigError("image id contains a comma");
      out << p.image << ',' << p.mode << ',' << format_double(p.lambda) << ',' << format_double(p.bpp) << ','
          << format_double(p.psnr) << '\n';
    }
    if (!out) throw IoError("cannot write " + csv_path);
  }

  // plot: one polyline per mode through the per-lambda mean points
  std::map<std::string, std::map<double, std::pair<double, double>>> sums;
  std::map<std::string, std::map<double, int>> counts;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& p : points) {
    auto& s = sums[p.mode][p.lambda];
    s.first += p.bpp;
    s.second += p.psnr;
    ++counts[p.mode][p.lambda];
    x0 = std::min(x0, p.bpp);
    x1 = std::max(x1, p.bpp);
    y0 = std::min(y0, p.psnr);
    y1 = std::max(y1, p.psnr);
  }
  if (x1 - x0 < 1e-9) { x0 -= 0.05; x1 += 0.05; }
  if (y1 - y0 < 1e-9) { y0 -= 0.5; y1 += 0.5; }
  const double W = 640, H = 480, L = 70, R = 20, T = 20, B = 60;
  auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::filesystem::path svg_path(csv_path);
  svg_path.replace_extension(".svg");
  std::ofstream svg(svg_path);
  if (!svg) throw IoError("cannot write " + svg_path.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", xv);
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.2f", yv);
    svg << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">bpp</text>\n";
  svg << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">PSNR (dB)</text>\n";
  int ci = 0;
  for (const auto& [mode, by_lambda] : sums) {
    const char* color = colors[ci % 4];
    std::vector<std::pair<double, double>> pts;
    for (const auto& [lambda, s] : by_lambda) {
      const int n = counts[mode][lambda];
      pts.emplace_back(s.first / n, s.second / n);
    }
    std::sort(pts.begin(), pts.end());
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) svg << sx(x) << ',' << sy(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : pts) {
      svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << W - R - 90 << "\" y=\"" << T + 16 + 16 * ci << "\" font-size=\"12\" fill=\"" << color << "\">"
        << mode << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
  return svg_path.string();
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "image,mode,lambda,bpp,psnr") throw IoError("unexpected CSV header in " + path);
  std::vector<RDPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& s : f) std::getline(ss, s, ',');
    out.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return out;
}

}  // namespace jdnd
