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

#include "ldfuse/common.hpp"
#include "ldfuse/net.hpp"
#include "ldfuse/value_range.hpp"
#include "test_support.hpp"

using namespace ldfuse;

namespace {
FusionNet fresh_net(std::uint64_t seed = 3, std::int64_t base = 32) {
  torch::manual_seed(seed);
  NetworkConfig cfg;
  cfg.base_channels = base;
  return FusionNet(cfg);
}

std::pair<torch::Tensor, torch::Tensor> signed_pair(std::int64_t h, std::int64_t w,
                                                    std::uint64_t seed, std::int64_t b = 1) {
  std::vector<torch::Tensor> irs, vss;
  for (std::int64_t i = 0; i < b; ++i) {
    irs.push_back(unit_to_signed(testing::synthetic_infrared(h, w, seed + 2 * i)));
    vss.push_back(unit_to_signed(testing::synthetic_visible(h, w, seed + 2 * i + 1)));
  }
  return {torch::stack(irs).unsqueeze(1), torch::stack(vss).unsqueeze(1)};
}
}  // namespace

TEST_CASE("adain matches the direct statistics oracle") {
  torch::manual_seed(1);
  auto x = torch::randn({2, 5, 17, 23}) * 3.0 + 1.0;

  SUBCASE("gamma=1, beta=0 standardizes each channel") {
    auto y = adain(x, torch::ones({5}), torch::zeros({5}));
    auto mean = y.mean({2, 3});
    auto stdev = y.std({2, 3}, /*unbiased=*/false);
    CHECK(mean.abs().max().item<double>() < 1e-4);
    CHECK((stdev - 1.0).abs().max().item<double>() < 1e-3);
  }

  SUBCASE("gamma=0 collapses to constant beta") {
    auto beta = torch::tensor({1.f, -2.f, 0.5f, 3.f, 0.f});
    auto y = adain(x, torch::zeros({5}), beta);
    for (int c = 0; c < 5; ++c) {
      CHECK((y.select(1, c) - beta[c]).abs().max().item<double>() < 1e-6);
    }
  }

  SUBCASE("arbitrary gamma/beta: output stats equal the parameters") {
    torch::manual_seed(2);
    auto gamma = torch::rand({2, 5}) * 2.0 + 0.25;
    auto beta = torch::randn({2, 5});
    auto y = adain(x, gamma, beta);
    CHECK((y.mean({2, 3}) - beta).abs().max().item<double>() < 1e-4);
    CHECK((y.std({2, 3}, false) - gamma).abs().max().item<double>() < 1e-3);
  }

  SUBCASE("wrong parameter length is rejected") {
    CHECK_THROWS_AS(adain(x, torch::ones({4}), torch::zeros({5})), ValidationError);
  }
}

TEST_CASE("adain parameter generation: shape, determinism, sensitivity") {
  auto net = fresh_net(11);
  net->eval();
  auto [ir, vs] = signed_pair(64, 64, 100, 2);
  auto [gamma, beta] = net->generate_adain_params(ir, vs);
  CHECK(gamma.sizes() == torch::IntArrayRef({2, net->config().fused_channels()}));
  CHECK(beta.sizes() == torch::IntArrayRef({2, net->config().fused_channels()}));

  auto [gamma2, beta2] = net->generate_adain_params(ir, vs);
  CHECK(torch::equal(gamma, gamma2));
  CHECK(torch::equal(beta, beta2));

  auto [ir_b, vs_b] = signed_pair(64, 64, 500, 2);
  auto [gamma3, beta3] = net->generate_adain_params(ir_b, vs_b);
  CHECK_FALSE(torch::allclose(gamma, gamma3));
  CHECK_FALSE(torch::allclose(beta, beta3));

  CHECK_THROWS_AS(net->generate_adain_params(ir, vs.slice(2, 0, 32)), ValidationError);
}

TEST_CASE("branch encoding: stride arithmetic and parameter independence") {
  auto net = fresh_net(13);
  net->eval();
  auto [ir, vs] = signed_pair(224, 224, 7, 1);
  auto f_ir = net->encode_branch(ir, Branch::kInfrared);
  CHECK(f_ir.sizes() == torch::IntArrayRef({1, net->config().fused_channels(), 56, 56}));

  // Same input through the two branches differs: distinct parameter sets.
  auto f_ir_as_vs = net->encode_branch(ir, Branch::kVisible);
  CHECK_FALSE(torch::allclose(f_ir, f_ir_as_vs));

  auto zero = torch::zeros({1, 1, 64, 64});
  auto f_zero = net->encode_branch(zero, Branch::kInfrared);
  CHECK(torch::isfinite(f_zero).all().item<bool>());

  CHECK_THROWS_AS(net->encode_branch(torch::zeros({1, 1, 63, 64}), Branch::kInfrared),
                  ValidationError);
}

TEST_CASE("fusion forward: shape preservation, tanh range, determinism") {
  auto net = fresh_net(17);
  net->eval();
  torch::NoGradGuard no_grad;
  for (auto hw : {std::pair<std::int64_t, std::int64_t>{224, 224}, {256, 320}}) {
    auto [ir, vs] = signed_pair(hw.first, hw.second, 50, 1);
    auto fused = net->fuse(ir, vs);
    CHECK(fused.sizes() == ir.sizes());
    CHECK(fused.min().item<double>() > -1.0);
    CHECK(fused.max().item<double>() < 1.0);
    CHECK(torch::isfinite(fused).all().item<bool>());
    auto fused2 = net->fuse(ir, vs);
    CHECK((fused - fused2).abs().max().item<double>() < 1e-6);
  }

  SUBCASE("shape mismatch between modalities is an error") {
    auto [ir, vs] = signed_pair(64, 64, 51, 1);
    CHECK_THROWS_AS(net->fuse(ir, vs.slice(3, 0, 32)), ValidationError);
  }
}

TEST_CASE("indivisible spatial dims: padded and cropped back, or strict error") {
  auto net = fresh_net(19);
  net->eval();
  torch::NoGradGuard no_grad;
  auto [ir, vs] = signed_pair(230, 227, 52, 1);
  auto fused = net->fuse(ir, vs);
  CHECK(fused.sizes() == ir.sizes());

  NetworkConfig strict;
  strict.strict_size = true;
  torch::manual_seed(19);
  FusionNet strict_net(strict);
  strict_net->eval();
  CHECK_THROWS_AS(strict_net->fuse(ir, vs), ValidationError);
}

TEST_CASE("every output pixel depends on both inputs") {
  auto net = fresh_net(23);
  auto [ir, vs] = signed_pair(32, 32, 53, 1);
  ir.requires_grad_(true);
  vs.requires_grad_(true);
  auto fused = net->fuse(ir, vs);
  fused[0][0][13][21].backward();
  REQUIRE(ir.grad().defined());
  REQUIRE(vs.grad().defined());
  CHECK(ir.grad().abs().sum().item<double>() > 0.0);
  CHECK(vs.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("checkpoint round trip reproduces outputs and metadata") {
  auto dir = testing::fresh_temp_dir("ckpt");
  auto net = fresh_net(29);
  net->eval();
  auto [ir, vs] = signed_pair(96, 96, 54, 2);
  torch::Tensor before;
  {
    torch::NoGradGuard no_grad;
    before = net->fuse(ir, vs);
  }

  Checkpoint info;
  info.config = net->config();
  info.encoder_variant = "dev-tiny";
  info.epoch = 5;
  info.history_total = {1.0, 0.9, 0.8};
  Checkpoint::save(dir / "model.lta", net, info);

  auto [restored, loaded] = Checkpoint::load(dir / "model.lta");
  restored->eval();
  CHECK(loaded.epoch == 5);
  CHECK(loaded.encoder_variant == "dev-tiny");
  CHECK(loaded.config.base_channels == net->config().base_channels);
  REQUIRE(loaded.history_total.size() == 3);
  CHECK(loaded.history_total[1] == doctest::Approx(0.9));

  torch::NoGradGuard no_grad;
  auto after = restored->fuse(ir, vs);
  CHECK((before - after).abs().max().item<double>() < 1e-6);

  CHECK_THROWS_AS(Checkpoint::load(dir / "missing.lta"), IoError);
  std::filesystem::remove_all(dir);
}
