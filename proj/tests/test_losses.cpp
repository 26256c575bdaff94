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

#include <random>

#include "ldfuse/common.hpp"
#include "ldfuse/losses.hpp"
#include "ldfuse/net.hpp"
#include "ldfuse/tensor_archive.hpp"
#include "ldfuse/value_range.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ldfuse;

namespace {

torch::Tensor unit_axis(int axis, int dim = 8) {
  auto v = torch::zeros({dim});
  v[axis] = 1.0;
  return v;
}

TransitionPair pair_of(const torch::Tensor& vs, const torch::Tensor& ir) {
  TransitionPair p;
  p.from_visible = vs;
  p.from_infrared = ir;
  return p;
}

}  // namespace

TEST_CASE("direction loss endpoints: parallel 0, orthogonal 1, antiparallel 2") {
  auto text = pair_of(unit_axis(0), unit_axis(1));

  CHECK(direction_loss(pair_of(2.5 * unit_axis(0), 0.7 * unit_axis(1)), text).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(direction_loss(pair_of(unit_axis(2), unit_axis(3)), text).item<double>() ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(direction_loss(pair_of(-unit_axis(0), -unit_axis(1)), text).item<double>() ==
        doctest::Approx(2.0).epsilon(1e-6));

  SUBCASE("mixed: one parallel, one antiparallel gives 1") {
    CHECK(direction_loss(pair_of(unit_axis(0), -unit_axis(1)), text).item<double>() ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("direction loss is invariant to positive rescaling (cosine homogeneity)") {
  torch::manual_seed(21);
  auto text = pair_of(torch::randn({8}), torch::randn({8}));
  auto img = pair_of(torch::randn({4, 8}), torch::randn({4, 8}));
  const double base = direction_loss(img, text).item<double>();
  auto scaled = pair_of(img.from_visible * 3.7, img.from_infrared);
  CHECK(direction_loss(scaled, text).item<double>() == doctest::Approx(base).epsilon(1e-6));
  auto scaled_text = pair_of(text.from_visible, text.from_infrared * 3.7);
  CHECK(direction_loss(img, scaled_text).item<double>() == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("direction loss stays in [0, 2] on random batches") {
  torch::manual_seed(22);
  for (int i = 0; i < 50; ++i) {
    auto val = direction_loss(pair_of(torch::randn({6, 8}), torch::randn({6, 8})),
                              pair_of(torch::randn({8}), torch::randn({8})))
                   .item<double>();
    REQUIRE(val >= 0.0);
    REQUIRE(val <= 2.0);
  }
}

TEST_CASE("zero-norm transition vectors are stabilized, not fatal") {
  auto text = pair_of(unit_axis(0), unit_axis(1));
  auto img = pair_of(torch::zeros({8}), unit_axis(1));
  auto val = direction_loss(img, text).item<double>();
  CHECK(std::isfinite(val));
}

TEST_CASE("direction regularization endpoints: 0, 2 and 4") {
  auto v = unit_axis(0);
  CHECK(direction_regularization(v, v, v).item<double>() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(direction_regularization(unit_axis(2), unit_axis(0), unit_axis(1)).item<double>() ==
        doctest::Approx(2.0).epsilon(1e-6));
  CHECK(direction_regularization(-v, v, v).item<double>() == doctest::Approx(4.0).epsilon(1e-6));

  SUBCASE("bounds hold on random batches") {
    torch::manual_seed(23);
    for (int i = 0; i < 50; ++i) {
      auto val = direction_regularization(torch::randn({5, 8}), torch::randn({5, 8}),
                                          torch::randn({5, 8}))
                     .item<double>();
      REQUIRE(val >= 0.0);
      REQUIRE(val <= 4.0);
    }
  }
}

TEST_CASE("feature fidelity: zero at identity, nonnegative, oracle agreement") {
  auto dir = testing::fresh_temp_dir("fidelity");
  write_dev_weights(dir, 7);
  auto fx = FidelityFeatureExtractor::load(dir / "vgg_features.lta");
  fx.to_double();

  torch::manual_seed(31);
  auto same = torch::rand({2, 1, 16, 16}, torch::kFloat64);
  CHECK(feature_fidelity_loss(fx, same, same, same).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-10));

  auto fused = torch::rand({3, 1, 8, 8}, torch::kFloat64);
  auto ir = torch::rand({3, 1, 8, 8}, torch::kFloat64);
  auto vs = torch::rand({3, 1, 8, 8}, torch::kFloat64);
  const double impl = feature_fidelity_loss(fx, fused, ir, vs).item<double>();
  CHECK(impl >= 0.0);

  // Independent re-walk of the formula from the raw archive tensors.
  auto ar = TensorArchive::load(dir / "vgg_features.lta");
  oracles::FidelityOracleStack stack;
  const auto layers = ar.meta.at("channels").size();
  for (std::size_t k = 1; k <= layers; ++k) {
    stack.weights.push_back(ar.at(ldfuse::concat("conv", k, ".weight")).to(torch::kFloat64));
    stack.biases.push_back(ar.at(ldfuse::concat("conv", k, ".bias")).to(torch::kFloat64));
  }
  stack.pool_after = ar.meta.at("pool_after").get<std::vector<int>>();
  stack.taps = ar.meta.at("taps").get<std::vector<int>>();
  auto mean = ar.meta.at("image_mean").get<std::vector<double>>();
  auto stdev = ar.meta.at("image_std").get<std::vector<double>>();
  std::copy(mean.begin(), mean.end(), stack.mean.begin());
  std::copy(stdev.begin(), stdev.end(), stack.stdev.begin());

  const double oracle = oracles::fidelity_oracle_loss(stack, fused, ir, vs);
  CHECK(impl == doctest::Approx(oracle).epsilon(1e-5));

  SUBCASE("squared-norm variant is also nonnegative and zero at identity") {
    CHECK(feature_fidelity_loss(fx, same, same, same, FidelityNorm::kL2).item<double>() ==
          doctest::Approx(0.0).epsilon(1e-10));
    CHECK(feature_fidelity_loss(fx, fused, ir, vs, FidelityNorm::kL2).item<double>() >= 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("loss term combination arithmetic is exact") {
  LossWeights w;  // lambda 0.5, alpha 1.0
  auto t = LossTerms::combine(0.3, 0.2, 0.1, w);
  CHECK(t.language_driven == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(t.total == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.total - t.weights.alpha_fidelity * t.fidelity -
            t.weights.lambda_regularization * t.regularization - t.direction ==
        doctest::Approx(0.0).epsilon(1e-12));
}

namespace {
struct LossFixture {
  TextImageEncoder encoder = TextImageEncoder::dev_tiny(7);
  FidelityFeatureExtractor extractor = FidelityFeatureExtractor::dev_tiny(8);
  TransitionPair text_model = encoder.build_fusion_model(PromptSet::defaults());

  TotalLossResult eval(const torch::Tensor& ir, const torch::Tensor& vs,
                       const torch::Tensor& fused, std::int64_t n_patches, std::uint64_t seed,
                       LossWeights w = {}) const {
    std::vector<PatchBatch> batches;
    if (n_patches > 0) {
      for (std::int64_t b = 0; b < ir.size(0); ++b) {
        auto batch = sample_patches(ir[b][0], vs[b][0], fused[b][0], n_patches, seed + 31 * b);
        filter_patches(batch, 0.0);  // keep everything: exercise the patch path
        augment_kept(batch, seed + 977, encoder.native_image_size(), 0.5);
        batches.push_back(std::move(batch));
      }
    }
    return total_loss(encoder, extractor, ir, vs, fused, batches, text_model, w);
  }
};
}  // namespace

TEST_CASE("total loss: decomposition identity over random evaluations") {
  LossFixture fix;
  std::mt19937_64 rng(55);
  for (int i = 0; i < 20; ++i) {
    auto ir = torch::rand({1, 1, 224, 224});
    auto vs = torch::rand({1, 1, 224, 224});
    auto fused = torch::rand({1, 1, 224, 224}) * 2 - 1;
    auto res = fix.eval(ir, vs, fused, 2, rng());
    const auto& t = res.terms;
    CHECK(std::abs(t.total - (t.direction + 0.5 * t.regularization + 1.0 * t.fidelity)) < 1e-6);
    CHECK(std::abs(t.total - res.total.item<double>()) < 1e-6);
    CHECK(t.direction >= 0.0);
    CHECK(t.direction <= 2.0);
    CHECK(t.regularization >= 0.0);
    CHECK(t.regularization <= 4.0);
    CHECK(t.fidelity >= 0.0);
  }
}

TEST_CASE("lambda = 0 removes the regularization contribution") {
  LossFixture fix;
  auto ir = torch::rand({1, 1, 128, 128});
  auto vs = torch::rand({1, 1, 128, 128});
  auto fused = torch::rand({1, 1, 128, 128}) * 2 - 1;
  LossWeights no_phi;
  no_phi.lambda_regularization = 0.0;
  auto res = fix.eval(ir, vs, fused, 2, 99, no_phi);
  CHECK(res.terms.language_driven == doctest::Approx(res.terms.direction).epsilon(1e-12));
  // The regularization value is still reported, it just carries no weight.
  CHECK(res.terms.total ==
        doctest::Approx(res.terms.direction + res.terms.fidelity).epsilon(1e-9));
}

TEST_CASE("zero surviving patches: whole-image term stands alone") {
  LossFixture fix;
  auto ir = torch::full({1, 1, 128, 128}, 0.5f);
  auto vs = torch::full({1, 1, 128, 128}, 0.25f);
  auto fused = torch::rand({1, 1, 128, 128}) * 2 - 1;

  std::vector<PatchBatch> batches;
  auto batch = sample_patches(ir[0][0], vs[0][0], fused[0][0], 4, 1);
  filter_patches(batch, 6.0);  // flat sources: everything dropped
  augment_kept(batch, 2, fix.encoder.native_image_size(), 0.5);
  batches.push_back(std::move(batch));
  auto with_dropped =
      total_loss(fix.encoder, fix.extractor, ir, vs, fused, batches, fix.text_model);

  auto whole_only = total_loss(fix.encoder, fix.extractor, ir, vs, fused, {}, fix.text_model);
  CHECK(with_dropped.terms.total == doctest::Approx(whole_only.terms.total).epsilon(1e-9));
}

TEST_CASE("patches change the direction term (they are real loss items)") {
  LossFixture fix;
  torch::manual_seed(77);
  auto ir = torch::rand({1, 1, 224, 224});
  auto vs = torch::rand({1, 1, 224, 224});
  auto fused = torch::rand({1, 1, 224, 224}) * 2 - 1;
  auto with_patches = fix.eval(ir, vs, fused, 4, 11);
  auto without = fix.eval(ir, vs, fused, 0, 11);
  CHECK(with_patches.terms.direction != doctest::Approx(without.terms.direction).epsilon(1e-9));
  CHECK(with_patches.terms.fidelity ==
        doctest::Approx(without.terms.fidelity).epsilon(1e-9));  // whole-image only
}

TEST_CASE("one backward pass reaches every generator parameter") {
  LossFixture fix;
  torch::manual_seed(41);
  NetworkConfig cfg;
  cfg.base_channels = 8;
  FusionNet net(cfg);
  net->train();

  auto ir = torch::rand({1, 1, 128, 128});
  auto vs = torch::rand({1, 1, 128, 128});
  auto fused = net->fuse(unit_to_signed(ir), unit_to_signed(vs));
  auto res = fix.eval(ir, vs, fused, 3, 13);
  res.total.backward();

  for (const auto& item : net->named_parameters()) {
    INFO("parameter: " << item.key());
    REQUIRE(item.value().grad().defined());
    CHECK(item.value().grad().abs().sum().item<double>() > 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences on a 64x64 toy") {
  TextImageEncoder encoder = TextImageEncoder::dev_tiny(7);
  FidelityFeatureExtractor extractor = FidelityFeatureExtractor::dev_tiny(8);
  encoder.to_double();
  extractor.to_double();
  auto text_model = encoder.build_fusion_model(PromptSet::defaults());

  auto pair = testing::synthetic_pair(64, 64, 1234);
  auto ir = pair.ir.to(torch::kFloat64).unsqueeze(0).unsqueeze(0);
  auto vs = pair.vs.to(torch::kFloat64).unsqueeze(0).unsqueeze(0);
  torch::manual_seed(99);
  auto fused0 = (torch::rand({1, 1, 64, 64}, torch::kFloat64) * 1.6 - 0.8);

  const std::uint64_t patch_seed = 5, aug_seed = 6;
  auto eval_loss = [&](const torch::Tensor& fused, bool grad) {
    auto f = fused.clone();
    if (grad) f.requires_grad_(true);
    auto batch = sample_patches(ir[0][0], vs[0][0], f[0][0], 3, patch_seed);
    filter_patches(batch, 0.0);
    augment_kept(batch, aug_seed, encoder.native_image_size(), 0.5);
    std::vector<PatchBatch> batches;
    batches.push_back(std::move(batch));
    auto res = total_loss(encoder, extractor, ir, vs, f, batches, text_model);
    return std::pair(res.total, f);
  };

  auto [loss, leaf] = eval_loss(fused0, true);
  loss.backward();
  auto grad = leaf.grad();

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> coord(0, 63);
  const double step = 1e-3;
  int checked = 0;
  for (int k = 0; k < 20; ++k) {
    const auto r = coord(rng), c = coord(rng);
    auto plus = fused0.clone();
    plus[0][0][r][c] += step;
    auto minus = fused0.clone();
    minus[0][0][r][c] -= step;
    const double fd =
        (eval_loss(plus, false).first.item<double>() -
         eval_loss(minus, false).first.item<double>()) /
        (2 * step);
    const double an = grad[0][0][r][c].item<double>();
    const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
    INFO("pixel (" << r << "," << c << "): analytic " << an << " fd " << fd);
    CHECK(std::abs(an - fd) / denom < 1e-2);
    ++checked;
  }
  CHECK(checked == 20);
}
