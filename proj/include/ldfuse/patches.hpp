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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ldfuse {

/// One sampled patch triple. All three crops come from identical source
/// coordinates; `fused_patch` stays attached to the autograd graph of the
/// fused image it was cut from.
struct PatchRecord {
  std::int64_t x = 0;  // left, source coordinates
  std::int64_t y = 0;  // top
  std::int64_t size = 0;
  std::int64_t batch_index = 0;  // which batch sample the crop came from

  torch::Tensor ir_patch;     // [size, size], [0, 1]
  torch::Tensor vs_patch;     // [size, size], [0, 1]
  torch::Tensor fused_patch;  // [size, size], [-1, 1], grad-carrying

  double entropy_ir = -1.0;  // bits, -1 until computed
  double entropy_vs = -1.0;
  bool kept = false;
};

/// Shared geometric transform applied jointly to a kept record's three crops.
struct AugmentedPatch {
  torch::Tensor ir;     // [out, out], [0, 1]
  torch::Tensor vs;     // [out, out], [0, 1]
  torch::Tensor fused;  // [out, out], [-1, 1], grad-carrying
  std::array<double, 8> corner_offsets{};  // perspective displacement per corner
};

struct PatchBatch {
  std::vector<PatchRecord> records;
  double sigma = 6.0;  // entropy threshold in bits
  std::vector<AugmentedPatch> augmented_views;  // one per kept record, in order
};

struct PatchSamplerOptions {
  std::int64_t min_size = 112;
  std::int64_t max_size = 180;
};

enum class EntropyKeepRule { kMax, kMin, kMean };

/// Randomly samples `n` patch triples with sizes uniform in
/// [min_size, max_size] and positions uniform over valid placements.
/// Source entropies are computed on the un-augmented crops immediately.
/// Images smaller than max_size clamp the sampling range (with a warning).
PatchBatch sample_patches(const torch::Tensor& ir_unit, const torch::Tensor& vs_unit,
                          const torch::Tensor& fused_signed, std::int64_t n, std::uint64_t seed,
                          const PatchSamplerOptions& opts = {}, std::int64_t batch_index = 0);

/// Shannon entropy in bits of the 256-level quantized histogram of a
/// single-channel patch in [0, 1]. Always in [0, 8].
double patch_entropy(const torch::Tensor& unit_patch);

/// Sets each record's `kept` flag from its source entropies and the
/// threshold; dropped records contribute nothing to the loss.
void filter_patches(PatchBatch& batch, double sigma,
                    EntropyKeepRule rule = EntropyKeepRule::kMax);

/// Applies one random perspective distortion (shared across the triple) and
/// resizes to `out_size`. Seeded; `distortion` = 0 keeps the crop unchanged
/// up to the resize.
AugmentedPatch augment_patch(const PatchRecord& record, std::uint64_t seed, std::int64_t out_size,
                             double distortion = 0.5);

/// Augments every kept record in place (fills batch.augmented_views).
void augment_kept(PatchBatch& batch, std::uint64_t seed, std::int64_t out_size,
                  double distortion = 0.5);

/// Inspection dump: writes kept/dropped patch thumbnails, entropy encoded in
/// the filename, into `dir`.
void dump_patch_thumbnails(const PatchBatch& batch, const std::filesystem::path& dir);

}  // namespace ldfuse
