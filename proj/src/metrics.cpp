/*
 * Copyright (c) 2026, the ldfuse authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "ldfuse/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "ldfuse/common.hpp"
#include "ldfuse/data_io.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

namespace {

void check_u8(const torch::Tensor& t, const char* what) {
  check(t.dim() == 2 && t.scalar_type() == torch::kUInt8, what,
        ": expected an 8-bit [H, W] image, got ", t.sizes(), " ", torch::toString(t.scalar_type()));
  check(t.numel() > 0, what, ": empty image");
}

torch::Tensor as_f64(const torch::Tensor& u8) { return u8.to(torch::kFloat64); }

double pearson(const torch::Tensor& a, const torch::Tensor& b, const char* label) {
  const auto x = a.flatten();
  const auto y = b.flatten();
  const auto xc = x - x.mean();
  const auto yc = y - y.mean();
  const double sxx = (xc * xc).sum().item<double>();
  const double syy = (yc * yc).sum().item<double>();
  if (sxx <= 0.0 || syy <= 0.0) {
    log_warn("metric_cc: zero-variance ", label, " operand, correlation defined as 0");
    return 0.0;
  }
  return (xc * yc).sum().item<double>() / std::sqrt(sxx * syy);
}

/// 2-D "valid" correlation with a separable or full kernel (float64).
torch::Tensor conv_valid(const torch::Tensor& img, const torch::Tensor& kernel) {
  namespace F = torch::nn::functional;
  auto x = img.unsqueeze(0).unsqueeze(0);
  auto w = kernel.unsqueeze(0).unsqueeze(0);
  return F::conv2d(x, w).squeeze(0).squeeze(0);
}

torch::Tensor gaussian_kernel(int size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g1 = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  auto g2 = torch::outer(g1, g1);
  return g2 / g2.sum();
}

}  // namespace

double metric_en(const torch::Tensor& fused_u8) {
  check_u8(fused_u8, "metric_en");
  auto counts = torch::bincount(fused_u8.flatten().to(torch::kInt64), {}, 256).to(torch::kFloat64);
  auto p = counts / static_cast<double>(fused_u8.numel());
  auto nz = p.masked_select(p > 0);
  return -(nz * torch::log2(nz)).sum().item<double>();
}

double metric_cc(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                 const torch::Tensor& vs_u8) {
  check_u8(fused_u8, "metric_cc");
  check_u8(ir_u8, "metric_cc");
  check_u8(vs_u8, "metric_cc");
  check(fused_u8.sizes() == ir_u8.sizes() && fused_u8.sizes() == vs_u8.sizes(),
        "metric_cc: images must share dims");
  const auto f = as_f64(fused_u8);
  return 0.5 * (pearson(f, as_f64(ir_u8), "infrared") + pearson(f, as_f64(vs_u8), "visible"));
}

double metric_sd(const torch::Tensor& fused_u8) {
  check_u8(fused_u8, "metric_sd");
  auto x = as_f64(fused_u8).flatten();
  auto centered = x - x.mean();
  return std::sqrt((centered * centered).mean().item<double>());
}

double metric_ei(const torch::Tensor& fused_u8) {
  check_u8(fused_u8, "metric_ei");
  namespace F = torch::nn::functional;
  auto x = as_f64(fused_u8).unsqueeze(0).unsqueeze(0);
  x = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect));
  auto kx = torch::tensor({{-1.0, 0.0, 1.0}, {-2.0, 0.0, 2.0}, {-1.0, 0.0, 1.0}},
                          torch::kFloat64);
  auto ky = kx.t().contiguous();
  auto gx = conv_valid(x.squeeze(0).squeeze(0), kx);
  auto gy = conv_valid(x.squeeze(0).squeeze(0), ky);
  return torch::sqrt(gx * gx + gy * gy).mean().item<double>();
}

namespace {

struct VifSums {
  double with_distortion = 0.0;     // information surviving the fusion channel
  double without_distortion = 0.0;  // reference information
};

/// Local-statistics information sums for one (source, fused) pair at the
/// current pyramid level, Gaussian window `win`.
VifSums vif_scale_sums(const torch::Tensor& src, const torch::Tensor& fused,
                       const torch::Tensor& win, const ViffParams& p) {
  auto mu_x = conv_valid(src, win);
  auto mu_y = conv_valid(fused, win);
  auto sigma_xx = (conv_valid(src * src, win) - mu_x * mu_x).clamp_min(0.0);
  auto sigma_yy = (conv_valid(fused * fused, win) - mu_y * mu_y).clamp_min(0.0);
  auto sigma_xy = conv_valid(src * fused, win) - mu_x * mu_y;

  auto g = sigma_xy / (sigma_xx + p.eps);
  auto sv = sigma_yy - g * sigma_xy;
  // Degenerate windows: no source variance means no transferable information.
  auto flat = sigma_xx < p.eps;
  g = torch::where(flat, torch::zeros_like(g), g);
  sv = torch::where(flat, sigma_yy, sv).clamp_min(p.eps);

  VifSums sums;
  sums.with_distortion =
      torch::log2(1.0 + g * g * sigma_xx / (sv + p.noise_variance)).sum().item<double>();
  sums.without_distortion =
      torch::log2(1.0 + sigma_xx / p.noise_variance).sum().item<double>();
  return sums;
}

}  // namespace

double metric_viff(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                   const torch::Tensor& vs_u8, const ViffParams& params) {
  check_u8(fused_u8, "metric_viff");
  check_u8(ir_u8, "metric_viff");
  check_u8(vs_u8, "metric_viff");
  check(fused_u8.sizes() == ir_u8.sizes() && fused_u8.sizes() == vs_u8.sizes(),
        "metric_viff: images must share dims");
  check(params.scales >= 1, "metric_viff: need >= 1 scale");

  torch::Tensor f = as_f64(fused_u8);
  torch::Tensor ir = as_f64(ir_u8);
  torch::Tensor vs = as_f64(vs_u8);

  double score = 0.0;
  int used_scales = 0;
  for (int scale = 1; scale <= params.scales; ++scale) {
    const int n = (1 << (params.scales - scale + 1)) + 1;  // 17, 9, 5, 3 for 4 scales
    auto win = gaussian_kernel(n, n / 5.0);
    if (scale > 1) {
      if (ir.size(0) < n || ir.size(1) < n) break;
      f = conv_valid(f, win).slice(0, 0, c10::nullopt, 2).slice(1, 0, c10::nullopt, 2);
      ir = conv_valid(ir, win).slice(0, 0, c10::nullopt, 2).slice(1, 0, c10::nullopt, 2);
      vs = conv_valid(vs, win).slice(0, 0, c10::nullopt, 2).slice(1, 0, c10::nullopt, 2);
    }
    if (ir.size(0) < n || ir.size(1) < n) break;
    const auto sums_ir = vif_scale_sums(ir, f, win, params);
    const auto sums_vs = vif_scale_sums(vs, f, win, params);
    const double den = sums_ir.without_distortion + sums_vs.without_distortion;
    const double num = sums_ir.with_distortion + sums_vs.with_distortion;
    score += den > params.eps ? num / den : 0.0;
    ++used_scales;
  }
  if (used_scales == 0) {
    log_warn("metric_viff: image too small for the requested scales, returning 0");
    return 0.0;
  }
  if (used_scales < params.scales)
    log_warn("metric_viff: only ", used_scales, "/", params.scales,
             " scales fit the image size");
  return score / used_scales;
}

ImageMetrics compute_image_metrics(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                                   const torch::Tensor& vs_u8) {
  ImageMetrics m;
  m.en = metric_en(fused_u8);
  m.cc = metric_cc(fused_u8, ir_u8, vs_u8);
  m.sd = metric_sd(fused_u8);
  m.ei = metric_ei(fused_u8);
  m.viff = metric_viff(fused_u8, ir_u8, vs_u8);
  return m;
}

std::string MetricsReport::to_table(char delim) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "id" << delim << "en" << delim << "cc" << delim << "sd" << delim << "ei" << delim
     << "viff" << "\n";
  auto row = [&](const std::string& id, const ImageMetrics& m) {
    os << id << delim << m.en << delim << m.cc << delim << m.sd << delim << m.ei << delim
       << m.viff << "\n";
  };
  for (const auto& [id, m] : per_image) row(id, m);
  row("aggregate", aggregate);
  return os.str();
}

MetricsReport evaluate_directory(const std::filesystem::path& fused_dir,
                                 const std::filesystem::path& ir_dir,
                                 const std::filesystem::path& vi_dir) {
  MetricsReport report;
  const auto fused_files = list_images(fused_dir);
  check(!fused_files.empty(), "no fused images found in ", fused_dir.string());
  auto sources = load_corpus_dirs(ir_dir, vi_dir);
  std::map<std::string, const ImagePair*> by_stem;
  for (const auto& p : sources.pairs) by_stem[p.id] = &p;

  for (const auto& [stem, path] : fused_files) {
    auto it = by_stem.find(stem);
    if (it == by_stem.end()) {
      log_warn("evaluate_directory: no source pair for fused image '", stem, "', skipped");
      continue;
    }
    auto fused = unit_to_uint8(load_image_unit(path));
    auto ir = unit_to_uint8(it->second->ir);
    auto vs = unit_to_uint8(it->second->vs);
    check(fused.sizes() == ir.sizes(), "fused image '", stem, "' dims ", fused.sizes(),
          " do not match sources ", ir.sizes());
    report.per_image.emplace_back(stem, compute_image_metrics(fused, ir, vs));
  }
  check(!report.per_image.empty(), "no fused image could be matched with a source pair");

  auto& agg = report.aggregate;
  for (const auto& [id, m] : report.per_image) {
    agg.en += m.en;
    agg.cc += m.cc;
    agg.sd += m.sd;
    agg.ei += m.ei;
    agg.viff += m.viff;
  }
  const double n = static_cast<double>(report.per_image.size());
  agg.en /= n;
  agg.cc /= n;
  agg.sd /= n;
  agg.ei /= n;
  agg.viff /= n;
  return report;
}

}  // namespace ldfuse
