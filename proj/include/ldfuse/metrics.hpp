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
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ldfuse {

// Fusion-quality metrics. All functions take 8-bit single-channel [H, W]
// tensors; the [-1, 1] -> 8-bit conversion lives in value_range.hpp.

/// Shannon entropy (bits) of the 256-bin intensity histogram. Range [0, 8].
double metric_en(const torch::Tensor& fused_u8);

/// Mean of the two Pearson correlations fused<->ir and fused<->vs over
/// flattened pixels, in [-1, 1]. A zero-variance operand makes that
/// correlation 0 (with a warning).
double metric_cc(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                 const torch::Tensor& vs_u8);

/// Population standard deviation of pixel values.
double metric_sd(const torch::Tensor& fused_u8);

/// Mean Sobel gradient magnitude, 3x3 kernels, reflect-padded borders.
double metric_ei(const torch::Tensor& fused_u8);

struct ViffParams {
  int scales = 4;              // Gaussian pyramid levels
  double noise_variance = 2.0; // HVS noise sigma_n^2 on the 0..255 scale
  double eps = 1e-10;          // variance stabilizer
};

/// Visual information fidelity for fusion: per-scale local variance-based
/// information ratios of each source against the fused image, combined
/// across the two sources and averaged over scales. See docs/metrics.md for
/// the exact parameterization.
double metric_viff(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                   const torch::Tensor& vs_u8, const ViffParams& params = {});

struct ImageMetrics {
  double en = 0, cc = 0, sd = 0, ei = 0, viff = 0;
};

struct MetricsReport {
  std::vector<std::pair<std::string, ImageMetrics>> per_image;
  ImageMetrics aggregate;  // arithmetic mean of per-image values

  /// Delimited table: header, one row per image, aggregate row last.
  std::string to_table(char delim = '\t') const;
};

ImageMetrics compute_image_metrics(const torch::Tensor& fused_u8, const torch::Tensor& ir_u8,
                                   const torch::Tensor& vs_u8);

/// Evaluates every fused image in `fused_dir` against the matching source
/// pair (matched by stem) and aggregates.
MetricsReport evaluate_directory(const std::filesystem::path& fused_dir,
                                 const std::filesystem::path& ir_dir,
                                 const std::filesystem::path& vi_dir);

}  // namespace ldfuse
