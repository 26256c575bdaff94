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
#include "ldfuse/embedding.hpp"

#include <algorithm>
#include <cstdlib>

#include "ldfuse/clip/model.hpp"
#include "ldfuse/clip/tokenizer.hpp"
#include "ldfuse/common.hpp"
#include "ldfuse/tensor_archive.hpp"

namespace ldfuse {

namespace {

// Channel statistics published with the reference pretrained encoder.
constexpr std::array<double, 3> kImageMean = {0.48145466, 0.4578275, 0.40821073};
constexpr std::array<double, 3> kImageStd = {0.26862954, 0.26130258, 0.27577711};

constexpr double kMinTransitionNorm = 1e-8;

torch::Tensor unit_normalize(const torch::Tensor& v) {
  return v / v.norm(2, -1, /*keepdim=*/true).clamp_min(1e-8);
}

}  // namespace

PromptSet PromptSet::swapped() const {
  PromptSet s = *this;
  std::swap(s.infrared_text, s.visible_text);
  return s;
}

void PromptSet::validate() const {
  check(!objective_text.empty(), "PromptSet: objective text must be non-empty");
  check(!infrared_text.empty(), "PromptSet: infrared text must be non-empty");
  check(!visible_text.empty(), "PromptSet: visible text must be non-empty");
}

std::string PromptSet::cache_key() const {
  return objective_text + "\x1f" + infrared_text + "\x1f" + visible_text;
}

TextImageEncoder::TextImageEncoder() : caches_(std::make_unique<Caches>()) {}
TextImageEncoder::~TextImageEncoder() = default;
TextImageEncoder::TextImageEncoder(TextImageEncoder&&) noexcept = default;
TextImageEncoder& TextImageEncoder::operator=(TextImageEncoder&&) noexcept = default;

std::filesystem::path TextImageEncoder::default_weights_dir() {
  if (const char* dir = std::getenv("LDFUSE_WEIGHTS")) return dir;
  if (const char* cache = std::getenv("LDFUSE_CACHE"))
    return std::filesystem::path(cache) / "weights";
  if (const char* home = std::getenv("HOME"))
    return std::filesystem::path(home) / ".cache" / "ldfuse" / "weights";
  return std::filesystem::path(".") / "ldfuse_weights";
}

TextImageEncoder TextImageEncoder::load(const std::filesystem::path& weights_dir) {
  const auto archive_path = weights_dir / "clip_encoder.lta";
  if (!std::filesystem::exists(archive_path))
    throw IoError(concat(
        "encoder weights not found at ", archive_path.string(),
        "; convert pretrained weights with scripts/export_pretrained.py, or generate ",
        "development weights with `ldfuse dev-weights --out ", weights_dir.string(), "`"));
  auto archive = TensorArchive::load(archive_path);
  check(archive.meta.value("kind", "") == "clip-encoder",
        archive_path.string(), ": not an encoder archive");

  TextImageEncoder enc;
  enc.model_ = std::make_shared<clip::ClipModelImpl>(
      clip::EncoderDims::from_json(archive.meta.at("dims")));
  enc.model_->load_tensors(archive);
  enc.model_->freeze();
  enc.variant_ = archive.meta.value("variant", "unknown");

  std::vector<double> mean = archive.meta.value("image_mean", std::vector<double>(
                                                                  kImageMean.begin(),
                                                                  kImageMean.end()));
  std::vector<double> stdv = archive.meta.value("image_std", std::vector<double>(
                                                                 kImageStd.begin(),
                                                                 kImageStd.end()));
  enc.image_mean_ = torch::tensor(mean, torch::kFloat32).view({3, 1, 1});
  enc.image_std_ = torch::tensor(stdv, torch::kFloat32).view({3, 1, 1});

  enc.tokenizer_ = std::make_unique<clip::BpeTokenizer>(
      clip::BpeTokenizer::from_merges_file(weights_dir / "clip_bpe_merges.txt"));
  check(enc.tokenizer_->vocab_size() == enc.model_->dims().vocab_size,
        "tokenizer vocabulary (", enc.tokenizer_->vocab_size(),
        ") does not match the encoder's embedding table (", enc.model_->dims().vocab_size, ")");
  return enc;
}

std::int64_t TextImageEncoder::dim() const { return model_->dims().embed_dim; }

std::int64_t TextImageEncoder::native_image_size() const { return model_->dims().image_size; }

double TextImageEncoder::logit_scale() const { return model_->logit_scale(); }

void TextImageEncoder::to_double() {
  std::lock_guard<std::mutex> lock(caches_->mutex);
  model_->to(torch::kFloat64);
  image_mean_ = image_mean_.to(torch::kFloat64);
  image_std_ = image_std_.to(torch::kFloat64);
  dtype_ = torch::kFloat64;
  caches_->text.clear();
  caches_->fusion_model.clear();
}

torch::Tensor TextImageEncoder::encode_text(const std::string& text) const {
  check(!text.empty(), "encode_text: empty text");
  {
    std::lock_guard<std::mutex> lock(caches_->mutex);
    auto it = caches_->text.find(text);
    if (it != caches_->text.end()) return it->second;
  }
  torch::NoGradGuard no_grad;
  auto tokens = tokenizer_->encode_context(text, model_->dims().context_length).unsqueeze(0);
  auto embedded = unit_normalize(model_->encode_text(tokens)).squeeze(0);
  {
    std::lock_guard<std::mutex> lock(caches_->mutex);
    caches_->text[text] = embedded;
  }
  return embedded;
}

torch::Tensor TextImageEncoder::encode_image(const torch::Tensor& unit_img) const {
  const bool single = unit_img.dim() == 2;
  check(single || unit_img.dim() == 4,
        "encode_image: expected [H, W] or [B, 1, H, W], got ", unit_img.sizes());
  auto x = single ? unit_img.unsqueeze(0).unsqueeze(0) : unit_img;
  check(x.size(1) == 1, "encode_image: expected a single-channel image");
  check(x.size(2) >= 32 && x.size(3) >= 32, "encode_image: image must be at least 32x32, got ",
        x.sizes());
  check(torch::isfinite(x).all().item<bool>(), "encode_image: non-finite pixels");

  x = x.to(dtype_);
  const auto native = model_->dims().image_size;
  if (x.size(2) != native || x.size(3) != native) {
    namespace F = torch::nn::functional;
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{native, native})
                              .mode(torch::kBicubic)
                              .align_corners(false));
  }
  x = x.expand({x.size(0), 3, native, native});
  x = (x - image_mean_) / image_std_;
  auto embedded = unit_normalize(model_->encode_image(x));
  return single ? embedded.squeeze(0) : embedded;
}

TransitionPair TextImageEncoder::build_fusion_model(const PromptSet& prompts) const {
  prompts.validate();
  const auto key = prompts.cache_key();
  {
    std::lock_guard<std::mutex> lock(caches_->mutex);
    auto it = caches_->fusion_model.find(key);
    if (it != caches_->fusion_model.end()) return it->second;
  }
  const auto objective = encode_text(prompts.objective_text);
  const auto visible = encode_text(prompts.visible_text);
  const auto infrared = encode_text(prompts.infrared_text);

  TransitionPair pair;
  pair.from_visible = objective - visible;
  pair.from_infrared = objective - infrared;
  check(pair.from_visible.norm().item<double>() > kMinTransitionNorm,
        "degenerate fusion model: objective text and visible text encode to the same vector");
  check(pair.from_infrared.norm().item<double>() > kMinTransitionNorm,
        "degenerate fusion model: objective text and infrared text encode to the same vector");
  {
    std::lock_guard<std::mutex> lock(caches_->mutex);
    caches_->fusion_model[key] = pair;
  }
  return pair;
}

std::vector<std::pair<std::string, double>> TextImageEncoder::probe(
    const torch::Tensor& unit_img, const std::vector<std::string>& prompts) const {
  check(!prompts.empty(), "probe: empty prompt list");
  check(prompts.size() >= 2, "probe: need at least two prompts to rank");
  torch::NoGradGuard no_grad;
  auto image_embedding = encode_image(unit_img);
  check(image_embedding.dim() == 1, "probe: expected a single image");

  std::vector<torch::Tensor> text_embeddings;
  text_embeddings.reserve(prompts.size());
  for (const auto& p : prompts) text_embeddings.push_back(encode_text(p));
  auto stacked = torch::stack(text_embeddings, 0);  // [P, D]
  auto logits = model_->logit_scale() * stacked.matmul(image_embedding);
  auto scores = torch::softmax(logits, 0).to(torch::kFloat64);

  std::vector<std::pair<std::string, double>> result;
  result.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i)
    result.emplace_back(prompts[i], scores[static_cast<std::int64_t>(i)].item<double>());
  std::stable_sort(result.begin(), result.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return result;
}

}  // namespace ldfuse
