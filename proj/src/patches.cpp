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
#include "ldfuse/patches.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "ldfuse/common.hpp"
#include "ldfuse/data_io.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

namespace {

void check_image(const torch::Tensor& t, const char* what) {
  check(t.dim() == 2 && t.numel() > 0, what, ": expected a non-empty [H, W] image, got ",
        t.sizes());
}

/// Homography mapping the unit axis-aligned square spanned by `dst` corners
/// onto the `src` quad (both as 4 x-y pairs), solved as the standard 8x8
/// direct linear system.
torch::Tensor solve_homography(const std::array<std::array<double, 2>, 4>& dst,
                               const std::array<std::array<double, 2>, 4>& src) {
  auto A = torch::zeros({8, 8}, torch::kFloat64);
  auto b = torch::zeros({8}, torch::kFloat64);
  for (int i = 0; i < 4; ++i) {
    const double u = dst[i][0], v = dst[i][1];
    const double x = src[i][0], y = src[i][1];
    A[2 * i][0] = u;
    A[2 * i][1] = v;
    A[2 * i][2] = 1.0;
    A[2 * i][6] = -u * x;
    A[2 * i][7] = -v * x;
    b[2 * i] = x;
    A[2 * i + 1][3] = u;
    A[2 * i + 1][4] = v;
    A[2 * i + 1][5] = 1.0;
    A[2 * i + 1][6] = -u * y;
    A[2 * i + 1][7] = -v * y;
    b[2 * i + 1] = y;
  }
  auto p = torch::linalg_solve(A, b);
  auto H = torch::ones({3, 3}, torch::kFloat64);
  H.view(-1).slice(0, 0, 8) = p;
  return H;
}

}  // namespace

double patch_entropy(const torch::Tensor& unit_patch) {
  check(unit_patch.numel() > 0, "patch_entropy: empty patch");
  torch::Tensor levels = unit_patch.scalar_type() == torch::kUInt8
                             ? unit_patch
                             : unit_to_uint8(unit_patch);
  auto counts =
      torch::bincount(levels.flatten().to(torch::kInt64), {}, 256).to(torch::kFloat64);
  auto p = counts / static_cast<double>(levels.numel());
  auto nz = p.masked_select(p > 0);
  return -(nz * torch::log2(nz)).sum().item<double>();
}

PatchBatch sample_patches(const torch::Tensor& ir_unit, const torch::Tensor& vs_unit,
                          const torch::Tensor& fused_signed, std::int64_t n, std::uint64_t seed,
                          const PatchSamplerOptions& opts, std::int64_t batch_index) {
  check_image(ir_unit, "sample_patches(ir)");
  check_image(vs_unit, "sample_patches(vs)");
  check_image(fused_signed, "sample_patches(fused)");
  check(ir_unit.sizes() == vs_unit.sizes() && ir_unit.sizes() == fused_signed.sizes(),
        "sample_patches: ir/vs/fused must share dims");
  check(n >= 1, "sample_patches: n must be >= 1");
  check(opts.min_size >= 1 && opts.min_size <= opts.max_size, "sample_patches: bad size range");

  const std::int64_t h = ir_unit.size(0);
  const std::int64_t w = ir_unit.size(1);
  std::int64_t lo = opts.min_size;
  std::int64_t hi = opts.max_size;
  const std::int64_t shortest = std::min(h, w);
  if (shortest < hi) {
    hi = shortest;
    lo = std::min(lo, hi);
    log_warn("sample_patches: image ", h, "x", w, " smaller than max patch size ",
             opts.max_size, ", sampling range clamped to [", lo, ", ", hi, "]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> size_dist(lo, hi);

  PatchBatch batch;
  batch.records.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    PatchRecord rec;
    rec.size = size_dist(rng);
    std::uniform_int_distribution<std::int64_t> x_dist(0, w - rec.size);
    std::uniform_int_distribution<std::int64_t> y_dist(0, h - rec.size);
    rec.x = x_dist(rng);
    rec.y = y_dist(rng);
    rec.batch_index = batch_index;
    rec.ir_patch = ir_unit.slice(0, rec.y, rec.y + rec.size).slice(1, rec.x, rec.x + rec.size);
    rec.vs_patch = vs_unit.slice(0, rec.y, rec.y + rec.size).slice(1, rec.x, rec.x + rec.size);
    rec.fused_patch =
        fused_signed.slice(0, rec.y, rec.y + rec.size).slice(1, rec.x, rec.x + rec.size);
    rec.entropy_ir = patch_entropy(rec.ir_patch);
    rec.entropy_vs = patch_entropy(rec.vs_patch);
    batch.records.push_back(std::move(rec));
  }
  return batch;
}

void filter_patches(PatchBatch& batch, double sigma, EntropyKeepRule rule) {
  batch.sigma = sigma;
  for (auto& rec : batch.records) {
    check(rec.entropy_ir >= 0.0 && rec.entropy_vs >= 0.0,
          "filter_patches: entropies not computed");
    double stat = 0.0;
    switch (rule) {
      case EntropyKeepRule::kMax: stat = std::max(rec.entropy_ir, rec.entropy_vs); break;
      case EntropyKeepRule::kMin: stat = std::min(rec.entropy_ir, rec.entropy_vs); break;
      case EntropyKeepRule::kMean: stat = 0.5 * (rec.entropy_ir + rec.entropy_vs); break;
    }
    rec.kept = stat >= sigma;
  }
  batch.augmented_views.clear();
}

AugmentedPatch augment_patch(const PatchRecord& record, std::uint64_t seed, std::int64_t out_size,
                             double distortion) {
  check(record.size > 1, "augment_patch: degenerate patch");
  check(out_size >= 2, "augment_patch: out_size must be >= 2");
  check(distortion >= 0.0 && distortion <= 1.0, "augment_patch: distortion must be in [0, 1]");

  const double s = static_cast<double>(record.size - 1);
  const auto max_offset = static_cast<std::int64_t>(distortion * static_cast<double>(record.size) / 2.0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> offset_dist(0, std::max<std::int64_t>(0, max_offset));

  AugmentedPatch out;
  for (auto& v : out.corner_offsets) v = static_cast<double>(offset_dist(rng));
  const auto& d = out.corner_offsets;
  // Corners displaced inward: top-left, top-right, bottom-right, bottom-left.
  const std::array<std::array<double, 2>, 4> src = {{{d[0], d[1]},
                                                     {s - d[2], d[3]},
                                                     {s - d[4], s - d[5]},
                                                     {d[6], s - d[7]}}};
  const std::array<std::array<double, 2>, 4> dst = {{{0.0, 0.0}, {s, 0.0}, {s, s}, {0.0, s}}};
  auto H = solve_homography(dst, src);

  // Sampling grid over the output raster, mapped through the homography and
  // normalized to [-1, 1] (align_corners convention).
  auto lin = torch::linspace(0.0, s, out_size, torch::kFloat64);
  auto grid_v = lin.view({out_size, 1}).expand({out_size, out_size});
  auto grid_u = lin.view({1, out_size}).expand({out_size, out_size});
  auto ones = torch::ones_like(grid_u);
  auto coords = torch::stack({grid_u.flatten(), grid_v.flatten(), ones.flatten()}, 0);  // [3, N]
  auto mapped = H.matmul(coords);
  auto xs = mapped[0] / mapped[2];
  auto ys = mapped[1] / mapped[2];
  auto grid = torch::stack({xs * (2.0 / s) - 1.0, ys * (2.0 / s) - 1.0}, 1)
                  .view({1, out_size, out_size, 2});

  auto stack =
      torch::stack({record.ir_patch, record.vs_patch, record.fused_patch}, 0).unsqueeze(1);
  auto warped = torch::nn::functional::grid_sample(
      stack, grid.to(stack.scalar_type()).expand({3, out_size, out_size, 2}),
      torch::nn::functional::GridSampleFuncOptions()
          .mode(torch::kBilinear)
          .padding_mode(torch::kBorder)
          .align_corners(true));
  out.ir = warped[0][0];
  out.vs = warped[1][0];
  out.fused = warped[2][0];
  return out;
}

void augment_kept(PatchBatch& batch, std::uint64_t seed, std::int64_t out_size,
                  double distortion) {
  batch.augmented_views.clear();
  SeedSequence seeds(seed);
  for (const auto& rec : batch.records) {
    const std::uint64_t rec_seed = seeds.next();
    if (!rec.kept) continue;
    batch.augmented_views.push_back(augment_patch(rec, rec_seed, out_size, distortion));
  }
}

void dump_patch_thumbnails(const PatchBatch& batch, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  int idx = 0;
  for (const auto& rec : batch.records) {
    std::ostringstream name;
    name << "p" << idx++ << "_" << (rec.kept ? "kept" : "dropped") << "_ir"
         << static_cast<int>(rec.entropy_ir * 100) << "_vs"
         << static_cast<int>(rec.entropy_vs * 100);
    save_fused(unit_to_signed(rec.ir_patch), dir / (name.str() + "_ir.png"));
    save_fused(unit_to_signed(rec.vs_patch), dir / (name.str() + "_vs.png"));
    save_fused(rec.fused_patch.detach(), dir / (name.str() + "_fused.png"));
  }
}

}  // namespace ldfuse
