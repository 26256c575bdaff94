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
#include <string>
#include <vector>

namespace ldfuse {

enum class RangeTag { kUnit, kSigned };

/// A registered infrared / visible-grayscale pair with shared spatial dims.
/// The visible channel is the luminance of the original (color inputs are
/// converted on load).
struct ImagePair {
  std::string id;
  torch::Tensor ir;  // [H, W] float32
  torch::Tensor vs;  // [H, W] float32
  RangeTag range = RangeTag::kUnit;
  std::filesystem::path source_path_ir;
  std::filesystem::path source_path_vs;

  /// Throws if dims differ, tensors are not [H, W] float, or the actual
  /// min/max falls outside the declared range.
  void validate() const;
};

struct CorpusLoadReport {
  std::vector<ImagePair> pairs;
  std::vector<std::string> warnings;  // orphan stems, rejected pairs with reason
};

/// Loads a raster file as a single-channel float32 [H, W] tensor in [0, 1].
/// Color images are reduced to luminance (ITU-R BT.601 weights); 8- and
/// 16-bit inputs are scaled by their declared bit depth.
torch::Tensor load_image_unit(const std::filesystem::path& path);

/// Writes a signed [-1, 1] image as a lossless 8-bit raster (PNG et al.).
/// The [-1, 1] -> 8-bit mapping is the shared rule in value_range.hpp.
void save_fused(const torch::Tensor& signed_img, const std::filesystem::path& path);

/// Proportional resize so the short side equals `target` pixels. The long
/// side is rounded to the nearest integer.
torch::Tensor resize_short_side(const torch::Tensor& img, std::int64_t target);

/// Loads `<root>/ir/` and `<root>/vi/`, pairing files by stem. Orphan stems
/// produce warnings; pairs with mismatched dims are rejected with a reason.
CorpusLoadReport load_corpus(const std::filesystem::path& root);
CorpusLoadReport load_corpus_dirs(const std::filesystem::path& ir_dir,
                                  const std::filesystem::path& vi_dir);

/// Manifest alternative for nonconforming datasets: one pair per line,
/// `id<TAB>ir_path<TAB>vs_path`. Relative paths resolve against the
/// manifest's directory.
CorpusLoadReport load_manifest(const std::filesystem::path& manifest);

/// Sorted (stem, path) listing of the raster files in a directory.
std::vector<std::pair<std::string, std::filesystem::path>> list_images(
    const std::filesystem::path& dir);

}  // namespace ldfuse
