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

#include "ldfuse/clip/tokenizer.hpp"
#include "ldfuse/common.hpp"
#include "ldfuse/embedding.hpp"
#include "test_support.hpp"

using namespace ldfuse;

namespace {
const TextImageEncoder& dev_encoder() {
  static TextImageEncoder enc = TextImageEncoder::dev_tiny(7);
  return enc;
}

// Regression fixtures computed once with the seed-7 dev-tiny encoder.
constexpr double kFixtureCosIrVs = 0.562899231911;
constexpr double kFixtureCosTransitions = 0.609188616276;
}  // namespace

TEST_CASE("text embeddings are unit-normalized, deterministic and cached") {
  const auto& enc = dev_encoder();
  auto a = enc.encode_text("an infrared image");
  auto b = enc.encode_text("an infrared image");
  CHECK(a.norm().item<double>() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(torch::equal(a, b));
  CHECK(a.dot(b).item<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a.numel() == enc.dim());
  CHECK_THROWS_AS(enc.encode_text(""), ValidationError);
}

TEST_CASE("distinct prompts embed apart: frozen regression value") {
  const auto& enc = dev_encoder();
  auto ir = enc.encode_text("an infrared image");
  auto vs = enc.encode_text("a visible gray image");
  const double cos = ir.dot(vs).item<double>();
  CHECK(cos < 1.0);
  CHECK(cos > -1.0);
  CHECK(cos == doctest::Approx(kFixtureCosIrVs).epsilon(1e-4));
}

TEST_CASE("image embeddings: shape contract, determinism, unit norm") {
  const auto& enc = dev_encoder();
  for (auto hw : {std::pair<std::int64_t, std::int64_t>{64, 64}, {224, 224}, {96, 160}}) {
    auto img = testing::synthetic_infrared(hw.first, hw.second, 5);
    auto e = enc.encode_image(img);
    CHECK(e.numel() == enc.dim());
    CHECK(e.norm().item<double>() == doctest::Approx(1.0).epsilon(1e-5));
    auto e2 = enc.encode_image(img);
    CHECK(torch::allclose(e, e2, 1e-6, 1e-6));
  }

  SUBCASE("batched input gives [B, D]") {
    auto batch = torch::rand({3, 1, 64, 64});
    auto e = enc.encode_image(batch);
    CHECK(e.sizes() == torch::IntArrayRef({3, enc.dim()}));
  }

  SUBCASE("validation errors") {
    auto bad = torch::full({64, 64}, std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS_AS(enc.encode_image(bad), ValidationError);
    CHECK_THROWS_AS(enc.encode_image(torch::rand({16, 16})), ValidationError);
  }
}

TEST_CASE("image encoding is differentiable w.r.t. pixels") {
  const auto& enc = dev_encoder();
  auto img = testing::synthetic_visible(64, 64, 6).clone().requires_grad_(true);
  auto e = enc.encode_image(img);
  e.sum().backward();
  REQUIRE(img.grad().defined());
  CHECK(img.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("fusion model construction: reconstruction, caching, degeneracy") {
  const auto& enc = dev_encoder();
  auto prompts = PromptSet::defaults();
  auto model = enc.build_fusion_model(prompts);

  auto objective = enc.encode_text(prompts.objective_text);
  auto visible = enc.encode_text(prompts.visible_text);
  auto infrared = enc.encode_text(prompts.infrared_text);
  CHECK(torch::allclose(model.from_visible + visible, objective, 1e-6, 1e-6));
  CHECK(torch::allclose(model.from_infrared + infrared, objective, 1e-6, 1e-6));

  CHECK(model.from_visible.norm().item<double>() > 1e-8);
  CHECK(model.from_infrared.norm().item<double>() > 1e-8);

  const double cos = (model.from_visible.dot(model.from_infrared) /
                      (model.from_visible.norm() * model.from_infrared.norm()))
                         .item<double>();
  CHECK(cos < 1.0 - 1e-4);  // non-parallel transitions
  CHECK(cos == doctest::Approx(kFixtureCosTransitions).epsilon(1e-4));

  SUBCASE("cached across calls") {
    auto again = enc.build_fusion_model(prompts);
    CHECK(torch::equal(again.from_visible, model.from_visible));
    CHECK(torch::equal(again.from_infrared, model.from_infrared));
  }

  SUBCASE("objective equal to a modality text is degenerate") {
    PromptSet bad = prompts;
    bad.visible_text = bad.objective_text;
    CHECK_THROWS_AS(enc.build_fusion_model(bad), ValidationError);
  }

  SUBCASE("empty prompt is rejected") {
    PromptSet bad = prompts;
    bad.infrared_text = "";
    CHECK_THROWS_AS(enc.build_fusion_model(bad), ValidationError);
  }
}

TEST_CASE("probe: softmax scores, symmetry, order invariance") {
  const auto& enc = dev_encoder();
  auto img = testing::synthetic_infrared(64, 64, 9);

  SUBCASE("two identical prompts split the mass evenly") {
    auto scores = enc.probe(img, {"an infrared image", "an infrared image"});
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].second == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(scores[1].second == doctest::Approx(0.5).epsilon(1e-6));
  }

  SUBCASE("scores sum to one and sort descending") {
    auto scores = enc.probe(img, {"an infrared image", "a visible gray image", "a photo"});
    double sum = 0.0;
    for (const auto& [prompt, s] : scores) sum += s;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < scores.size(); ++i) CHECK(scores[i - 1].second >= scores[i].second);
  }

  SUBCASE("prompt order only reorders the output") {
    auto a = enc.probe(img, {"an infrared image", "a visible gray image"});
    auto b = enc.probe(img, {"a visible gray image", "an infrared image"});
    REQUIRE(a.size() == b.size());
    CHECK(a[0].first == b[0].first);
    CHECK(a[0].second == doctest::Approx(b[0].second).epsilon(1e-9));
  }

  SUBCASE("degenerate prompt lists are rejected") {
    CHECK_THROWS_AS(enc.probe(img, {}), ValidationError);
    CHECK_THROWS_AS(enc.probe(img, {"only one"}), ValidationError);
  }
}

TEST_CASE("tokenizer: context assembly and explicit overflow error") {
  auto tok = clip::BpeTokenizer::from_merges({{"t", "h"}, {"th", "e</w>"}});
  auto row = tok.encode_context("the cat", 77);
  CHECK(row.numel() == 77);
  CHECK(row[0].item<std::int64_t>() == tok.start_id());
  const auto ids = tok.encode("the cat");
  CHECK(row[static_cast<std::int64_t>(ids.size()) + 1].item<std::int64_t>() == tok.end_id());
  CHECK(row.argmax().item<std::int64_t>() ==
        static_cast<std::int64_t>(ids.size()) + 1);  // end marker holds the max id

  std::string longtext;
  for (int i = 0; i < 100; ++i) longtext += "word ";
  CHECK_THROWS_WITH_AS(tok.encode_context(longtext, 77), doctest::Contains("context limit"),
                       ValidationError);

  SUBCASE("merges apply and casing/whitespace are normalized") {
    CHECK(tok.encode("The   cat") == tok.encode("the cat"));
    auto the_ids = tok.encode("the");
    CHECK(the_ids.size() == 1);  // t+h merge, then th+e</w>
  }
}

TEST_CASE("weight archives round trip through the filesystem") {
  auto dir = testing::fresh_temp_dir("dev_weights");
  write_dev_weights(dir, 7);
  CHECK(std::filesystem::exists(dir / "clip_encoder.lta"));
  CHECK(std::filesystem::exists(dir / "clip_bpe_merges.txt"));
  CHECK(std::filesystem::exists(dir / "vgg_features.lta"));

  auto loaded = TextImageEncoder::load(dir);
  CHECK(loaded.variant() == "dev-tiny");
  CHECK(loaded.dim() == dev_encoder().dim());

  // Same seed -> same weights -> identical embeddings as the in-memory build.
  auto a = loaded.encode_text("an infrared image");
  auto b = dev_encoder().encode_text("an infrared image");
  CHECK(torch::allclose(a, b, 1e-6, 1e-6));

  auto img = testing::synthetic_infrared(64, 64, 30);
  CHECK(torch::allclose(loaded.encode_image(img), dev_encoder().encode_image(img), 1e-5, 1e-5));
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing weights produce a load error with an acquisition hint") {
  CHECK_THROWS_WITH_AS(TextImageEncoder::load("/nonexistent/ldfuse_weights"),
                       doctest::Contains("export_pretrained"), IoError);
}
