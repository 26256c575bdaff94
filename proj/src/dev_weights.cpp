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
#include <fstream>

#include "ldfuse/clip/model.hpp"
#include "ldfuse/clip/tokenizer.hpp"
#include "ldfuse/common.hpp"
#include "ldfuse/embedding.hpp"
#include "ldfuse/tensor_archive.hpp"
#include "ldfuse/vgg.hpp"

namespace ldfuse {

namespace {

constexpr std::array<double, 3> kClipMean = {0.48145466, 0.4578275, 0.40821073};
constexpr std::array<double, 3> kClipStd = {0.26862954, 0.26130258, 0.27577711};

/// Small fixed merge list for the development tokenizer. Merge quality is
/// irrelevant for randomly initialized weights; the list only has to be
/// well-formed (each side of a merge must already be constructible).
const std::vector<std::pair<std::string, std::string>>& dev_merges() {
  static const std::vector<std::pair<std::string, std::string>> merges = {
      {"i", "n"},      {"t", "h"},      {"a", "n"},      {"r", "e"},
      {"o", "n"},      {"e", "r"},      {"a", "r"},      {"e", "n"},
      {"o", "r"},      {"s", "t"},      {"a", "l"},      {"l", "e"},
      {"d", "e"},      {"v", "i"},      {"s", "i"},      {"c", "l"},
      {"i", "m"},      {"a", "g"},      {"o", "b"},      {"g", "r"},
      {"w", "i"},      {"b", "l"},      {"c", "a"},      {"m", "a"},
      {"p", "r"},      {"t", "r"},      {"f", "u"},      {"s", "a"},
      {"d", "i"},      {"b", "a"},      {"im", "ag"},    {"th", "e</w>"},
      {"e", "d</w>"},  {"in", "g</w>"}, {"e", "s</w>"},  {"a", "t</w>"},
      {"i", "s</w>"},  {"an", "d</w>"}, {"imag", "e</w>"}, {"t", "s</w>"},
  };
  return merges;
}

std::shared_ptr<clip::ClipModelImpl> make_dev_model(std::int64_t vocab, std::uint64_t seed) {
  torch::manual_seed(seed);
  return std::make_shared<clip::ClipModelImpl>(clip::EncoderDims::dev_tiny(vocab));
}

}  // namespace

TextImageEncoder TextImageEncoder::dev_tiny(std::uint64_t seed) {
  TextImageEncoder enc;
  enc.tokenizer_ =
      std::make_unique<clip::BpeTokenizer>(clip::BpeTokenizer::from_merges(dev_merges()));
  enc.model_ = make_dev_model(enc.tokenizer_->vocab_size(), seed);
  enc.model_->freeze();
  enc.variant_ = "dev-tiny";
  enc.image_mean_ =
      torch::tensor({kClipMean[0], kClipMean[1], kClipMean[2]}, torch::kFloat32).view({3, 1, 1});
  enc.image_std_ =
      torch::tensor({kClipStd[0], kClipStd[1], kClipStd[2]}, torch::kFloat32).view({3, 1, 1});
  return enc;
}

void write_dev_weights(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);

  // Tokenizer merges.
  {
    std::ofstream os(dir / "clip_bpe_merges.txt");
    if (!os) throw IoError(concat("cannot write merges file in ", dir.string()));
    os << "# ldfuse development BPE merges v1\n";
    for (const auto& [a, b] : dev_merges()) os << a << ' ' << b << '\n';
  }

  // Encoder archive.
  {
    auto tokenizer = clip::BpeTokenizer::from_merges(dev_merges());
    auto model = make_dev_model(tokenizer.vocab_size(), seed);
    TensorArchive ar;
    ar.meta["format"] = "ldfuse-tensor-archive";
    ar.meta["format_version"] = 1;
    ar.meta["kind"] = "clip-encoder";
    ar.meta["variant"] = "dev-tiny";
    ar.meta["dims"] = model->dims().to_json();
    ar.meta["image_mean"] = std::vector<double>(kClipMean.begin(), kClipMean.end());
    ar.meta["image_std"] = std::vector<double>(kClipStd.begin(), kClipStd.end());
    for (const auto& item : model->named_parameters()) ar.put(item.key(), item.value());
    ar.save(dir / "clip_encoder.lta");
  }

  // Fidelity feature extractor archive.
  {
    auto fx = FidelityFeatureExtractor::dev_tiny(seed + 1);
    TensorArchive ar;
    ar.meta["format"] = "ldfuse-tensor-archive";
    ar.meta["format_version"] = 1;
    ar.meta["variant"] = "dev-tiny";
    fx.append_to_archive(ar);
    ar.save(dir / "vgg_features.lta");
  }

  log_info("development weights written to ", dir.string());
}

}  // namespace ldfuse
