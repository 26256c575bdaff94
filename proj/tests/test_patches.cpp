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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

#include <set>

#include "ldfuse/patches.hpp"
#include "ldfuse/value_range.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ldfuse;

namespace {
PatchBatch sample_on(std::int64_t h, std::int64_t w, std::int64_t n, std::uint64_t seed) {
  auto ir = testing::synthetic_infrared(h, w, seed * 7 + 1);
  auto vs = testing::synthetic_visible(h, w, seed * 7 + 2);
  auto fused = unit_to_signed((ir + vs) / 2);
  return sample_patches(ir, vs, fused, n, seed);
}
}  // namespace

TEST_CASE("patch sampling is deterministic under a fixed seed") {
  auto a = sample_on(224, 224, 8, 42);
  auto b = sample_on(224, 224, 8, 42);
  REQUIRE(a.records.size() == 8);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].x == b.records[i].x);
    CHECK(a.records[i].y == b.records[i].y);
    CHECK(a.records[i].size == b.records[i].size);
    CHECK(a.records[i].entropy_ir == doctest::Approx(b.records[i].entropy_ir));
  }
  auto c = sample_on(224, 224, 8, 43);
  bool all_same = true;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    all_same = all_same && a.records[i].x == c.records[i].x && a.records[i].y == c.records[i].y;
  CHECK_FALSE(all_same);
}

TEST_CASE("patch sizes stay in [112, 180] and crops stay in bounds") {
  auto ir = testing::synthetic_infrared(224, 224, 3);
  auto vs = testing::synthetic_visible(224, 224, 4);
  auto fused = unit_to_signed((ir + vs) / 2);
  std::set<std::int64_t> seen_sizes;
  for (int rep = 0; rep < 125; ++rep) {
    auto batch = sample_patches(ir, vs, fused, 80, 1000 + rep);
    for (const auto& rec : batch.records) {
      REQUIRE(rec.size >= 112);
      REQUIRE(rec.size <= 180);
      REQUIRE(rec.x >= 0);
      REQUIRE(rec.y >= 0);
      REQUIRE(rec.x + rec.size <= 224);
      REQUIRE(rec.y + rec.size <= 224);
      seen_sizes.insert(rec.size);
    }
  }
  CHECK(seen_sizes.size() > 40);  // the whole range is actually exercised
  CHECK(*seen_sizes.begin() == 112);
  CHECK(*seen_sizes.rbegin() == 180);
}

TEST_CASE("images smaller than the max patch clamp the sampling range") {
  auto batch = sample_on(128, 128, 8, 9);
  for (const auto& rec : batch.records) {
    CHECK(rec.size <= 128);
    CHECK(rec.size >= 112);
  }
  auto tiny = sample_on(64, 64, 4, 10);
  for (const auto& rec : tiny.records) CHECK(rec.size == 64);
}

TEST_CASE("patch entropy: exact endpoint values") {
  CHECK(patch_entropy(torch::full({31, 31}, 0.5f)) == doctest::Approx(0.0).epsilon(1e-12));

  auto two_level = torch::cat({torch::zeros({16, 8}), torch::ones({16, 8})}, 1);
  CHECK(patch_entropy(two_level) == doctest::Approx(1.0).epsilon(1e-12));

  auto uniform = torch::arange(0, 256, torch::kInt64).repeat(4).view({32, 32}).to(torch::kUInt8);
  CHECK(patch_entropy(uniform) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("patch entropy depends only on the histogram") {
  auto img = testing::synthetic_visible(40, 40, 21);
  auto flat = img.flatten();
  torch::manual_seed(8);
  auto shuffled = flat.index_select(0, torch::randperm(flat.numel())).view({40, 40});
  CHECK(patch_entropy(img) == doctest::Approx(patch_entropy(shuffled)).epsilon(1e-12));

  SUBCASE("agreement with the scalar histogram oracle") {
    for (int i = 0; i < 6; ++i) {
      auto u8 = testing::random_u8(24, 24, 50 + i);
      CHECK(patch_entropy(uint8_to_unit(u8)) ==
            doctest::Approx(oracles::entropy_u8(u8)).epsilon(1e-9));
    }
  }
}

TEST_CASE("entropy bounds hold across 10000 random patches") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 10000; ++i) {
    const auto h = 2 + static_cast<std::int64_t>(rng() % 14);
    const auto w = 2 + static_cast<std::int64_t>(rng() % 14);
    auto u8 = testing::random_u8(h, w, rng());
    const double bits = patch_entropy(uint8_to_unit(u8));
    REQUIRE(bits >= 0.0);
    REQUIRE(bits <= 8.0);
  }
}

TEST_CASE("entropy filtering drops flat patches and keeps textured ones") {
  auto flat_ir = torch::full({128, 128}, 0.2f);
  auto flat_vs = torch::full({128, 128}, 0.6f);
  auto textured_ir = uint8_to_unit(testing::random_u8(128, 128, 31));
  auto textured_vs = uint8_to_unit(testing::random_u8(128, 128, 32));
  auto fused = unit_to_signed((flat_ir + flat_vs) / 2);

  PatchBatch batch;
  PatchRecord flat_rec;
  flat_rec.size = 112;
  flat_rec.ir_patch = flat_ir.slice(0, 0, 112).slice(1, 0, 112);
  flat_rec.vs_patch = flat_vs.slice(0, 0, 112).slice(1, 0, 112);
  flat_rec.fused_patch = fused.slice(0, 0, 112).slice(1, 0, 112);
  flat_rec.entropy_ir = patch_entropy(flat_rec.ir_patch);
  flat_rec.entropy_vs = patch_entropy(flat_rec.vs_patch);

  PatchRecord tex_rec = flat_rec;
  tex_rec.ir_patch = textured_ir.slice(0, 0, 112).slice(1, 0, 112);
  tex_rec.vs_patch = textured_vs.slice(0, 0, 112).slice(1, 0, 112);
  tex_rec.entropy_ir = patch_entropy(tex_rec.ir_patch);
  tex_rec.entropy_vs = patch_entropy(tex_rec.vs_patch);
  CHECK(tex_rec.entropy_ir > 7.0);  // natural-texture stand-in is information-rich

  batch.records = {flat_rec, tex_rec};
  filter_patches(batch, 6.0);
  CHECK_FALSE(batch.records[0].kept);
  CHECK(batch.records[1].kept);

  SUBCASE("sigma = 0 keeps everything") {
    filter_patches(batch, 0.0);
    CHECK(batch.records[0].kept);
    CHECK(batch.records[1].kept);
  }

  SUBCASE("keep rule: max keeps a patch flat in only one modality") {
    PatchBatch mixed;
    PatchRecord rec = flat_rec;          // flat infrared...
    rec.vs_patch = tex_rec.vs_patch;     // ...textured visible
    rec.entropy_vs = tex_rec.entropy_vs;
    mixed.records = {rec};
    filter_patches(mixed, 6.0, EntropyKeepRule::kMax);
    CHECK(mixed.records[0].kept);
    filter_patches(mixed, 6.0, EntropyKeepRule::kMin);
    CHECK_FALSE(mixed.records[0].kept);
  }
}

TEST_CASE("filtering is monotone in sigma") {
  auto ir = testing::synthetic_infrared(224, 224, 61);
  auto vs = testing::synthetic_visible(224, 224, 62);
  auto fused = unit_to_signed((ir + vs) / 2);
  auto batch = sample_patches(ir, vs, fused, 64, 13);

  filter_patches(batch, 6.0);
  std::set<std::size_t> kept6;
  for (std::size_t i = 0; i < batch.records.size(); ++i)
    if (batch.records[i].kept) kept6.insert(i);

  filter_patches(batch, 5.0);
  std::set<std::size_t> kept5;
  for (std::size_t i = 0; i < batch.records.size(); ++i)
    if (batch.records[i].kept) kept5.insert(i);

  for (auto idx : kept6) CHECK(kept5.count(idx) == 1);
}

TEST_CASE("augmentation: identity distortion reduces to a resize") {
  auto ir = testing::synthetic_infrared(200, 200, 71);
  auto vs = testing::synthetic_visible(200, 200, 72);
  auto fused = unit_to_signed((ir + vs) / 2);
  auto batch = sample_patches(ir, vs, fused, 1, 14,
                              PatchSamplerOptions{.min_size = 128, .max_size = 128});
  auto& rec = batch.records[0];

  auto same_size = augment_patch(rec, 15, /*out_size=*/128, /*distortion=*/0.0);
  CHECK(torch::allclose(same_size.ir, rec.ir_patch, 1e-5, 1e-5));
  CHECK(torch::allclose(same_size.fused, rec.fused_patch, 1e-5, 1e-5));

  SUBCASE("seeded determinism") {
    auto a = augment_patch(rec, 99, 64, 0.5);
    auto b = augment_patch(rec, 99, 64, 0.5);
    CHECK(torch::equal(a.ir, b.ir));
    CHECK(torch::equal(a.fused, b.fused));
    auto c = augment_patch(rec, 98, 64, 0.5);
    CHECK_FALSE(torch::allclose(a.ir, c.ir));
  }

  SUBCASE("the triple shares one geometric transform") {
    PatchRecord twin = rec;
    twin.vs_patch = rec.ir_patch;                    // visible slot carries ir content
    twin.fused_patch = unit_to_signed(rec.ir_patch); // fused slot too (as signed)
    auto view = augment_patch(twin, 123, 96, 0.5);
    CHECK(torch::allclose(view.ir, view.vs, 1e-6, 1e-6));
    CHECK(torch::allclose(unit_to_signed(view.ir), view.fused, 1e-5, 1e-5));
  }
}

TEST_CASE("augmented fused views keep the autograd connection") {
  auto ir = testing::synthetic_infrared(160, 160, 81);
  auto vs = testing::synthetic_visible(160, 160, 82);
  auto fused = unit_to_signed((ir + vs) / 2).clone().requires_grad_(true);
  auto batch = sample_patches(ir, vs, fused, 2, 16);
  filter_patches(batch, 0.0);
  augment_kept(batch, 17, 64, 0.5);
  REQUIRE(batch.augmented_views.size() == 2);
  auto loss = batch.augmented_views[0].fused.sum() + batch.augmented_views[1].fused.sum();
  loss.backward();
  CHECK(fused.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("kept flags decide which records get augmented views") {
  auto ir = torch::full({128, 128}, 0.3f);
  auto vs = testing::synthetic_visible(128, 128, 91);
  auto fused = unit_to_signed((ir + vs) / 2);
  auto batch = sample_patches(ir, vs, fused, 6, 18);
  filter_patches(batch, 8.1);  // above the maximum, everything dropped
  augment_kept(batch, 19, 64, 0.5);
  CHECK(batch.augmented_views.empty());
}
