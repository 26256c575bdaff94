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
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace ldfuse {

namespace clip {
class BpeTokenizer;
class ClipModelImpl;
}  // namespace clip

/// The three texts that define the embedded fusion model: what the fused
/// image should be, and how each source modality is described.
struct PromptSet {
  std::string objective_text = "a clear image with detailed background and salient objects";
  std::string infrared_text = "an infrared image";
  std::string visible_text = "a visible gray image";

  static PromptSet defaults() { return {}; }
  /// Source descriptions exchanged (ablation configuration).
  PromptSet swapped() const;
  void validate() const;  // all three non-empty
  std::string cache_key() const;
};

/// The two embedding-space transition vectors that define the fusion
/// direction: objective minus visible, and objective minus infrared.
struct TransitionPair {
  torch::Tensor from_visible;   // V_objective - V_visible
  torch::Tensor from_infrared;  // V_objective - V_infrared
};

/// Frozen text/image encoder pair sharing one embedding space. Wraps the
/// transformer towers, owns preprocessing, and exposes the operations the
/// training signal needs. Image encoding is differentiable w.r.t. pixels;
/// text encoding is not (and is cached).
class TextImageEncoder {
 public:
  /// Loads `clip_encoder.lta` + `clip_bpe_merges.txt` from a directory.
  static TextImageEncoder load(const std::filesystem::path& weights_dir);

  /// Resolves the weights directory from `LDFUSE_WEIGHTS` or the default
  /// cache location (`~/.cache/ldfuse`, overridable via `LDFUSE_CACHE`).
  static std::filesystem::path default_weights_dir();

  /// Small randomly initialized in-memory variant for development and tests.
  static TextImageEncoder dev_tiny(std::uint64_t seed);

  /// Unit-normalized [D] embedding. Deterministic; no gradients.
  torch::Tensor encode_text(const std::string& text) const;

  /// Unit-normalized embedding of a single-channel image in [0, 1].
  /// Accepts [H, W] (returns [D]) or [B, 1, H, W] (returns [B, D]). The
  /// image is replicated to 3 channels, resized to the encoder's native
  /// input resolution and channel-normalized. Differentiable w.r.t. pixels.
  torch::Tensor encode_image(const torch::Tensor& unit_img) const;

  /// Text-side transition pair for the prompt set. Cached per prompt set;
  /// throws if a transition vector is degenerate (objective text equal to a
  /// modality text).
  TransitionPair build_fusion_model(const PromptSet& prompts) const;

  /// Softmax over scaled image/text cosine similarities, sorted descending.
  /// Requires at least two prompts.
  std::vector<std::pair<std::string, double>> probe(
      const torch::Tensor& unit_img, const std::vector<std::string>& prompts) const;

  std::int64_t dim() const;
  std::int64_t native_image_size() const;
  std::string variant() const { return variant_; }
  double logit_scale() const;

  /// Switches the whole encoder (weights + preprocessing constants) to
  /// float64, e.g. for finite-difference gradient checks.
  void to_double();

  ~TextImageEncoder();
  TextImageEncoder(TextImageEncoder&&) noexcept;
  TextImageEncoder& operator=(TextImageEncoder&&) noexcept;

 private:
  TextImageEncoder();

  std::shared_ptr<clip::ClipModelImpl> model_;
  std::unique_ptr<clip::BpeTokenizer> tokenizer_;
  torch::Tensor image_mean_, image_std_;  // [3, 1, 1]
  std::string variant_;
  torch::ScalarType dtype_ = torch::kFloat32;

  struct Caches {
    std::mutex mutex;
    std::map<std::string, torch::Tensor> text;
    std::map<std::string, TransitionPair> fusion_model;
  };
  std::unique_ptr<Caches> caches_;
};

/// Writes randomly initialized development weights (encoder archive, BPE
/// merges, fidelity-extractor archive) into `dir`.
void write_dev_weights(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace ldfuse
