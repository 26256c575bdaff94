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

#include <vector>

#include "ldfuse/embedding.hpp"
#include "ldfuse/patches.hpp"
#include "ldfuse/vgg.hpp"

namespace ldfuse {

struct LossWeights {
  double lambda_regularization = 0.5;  // weight of the direction regularization
  double alpha_fidelity = 1.0;         // weight of the feature-fidelity term
};

enum class FidelityNorm { kL1, kL2 };

/// Per-batch loss breakdown. `language_driven` and `total` are derived
/// exactly from the other fields via `combine`.
struct LossTerms {
  double direction = 0.0;        // in [0, 2]
  double regularization = 0.0;   // in [0, 4]
  double fidelity = 0.0;         // >= 0
  double language_driven = 0.0;  // direction + lambda * regularization
  double total = 0.0;            // language_driven + alpha * fidelity
  LossWeights weights;

  static LossTerms combine(double direction, double regularization, double fidelity,
                           const LossWeights& weights);

  /// One line of the training log: step, epoch, lr, then the loss columns
  /// (l_d, phi, l_v, l_total).
  static std::string log_header();
  std::string log_row(std::int64_t step, std::int64_t epoch, double lr) const;
};

/// One minus the mean cosine alignment between the image-side and text-side
/// transition pairs. Image-side tensors may be batched [M, D]; the result is
/// the mean over items, in [0, 2]. Zero-norm vectors are epsilon-stabilized
/// with a warning (they can occur early in training).
torch::Tensor direction_loss(const TransitionPair& image_deltas,
                             const TransitionPair& text_deltas);

/// |1 - cos(fused, visible)| + |1 - cos(fused, infrared)|, mean over items;
/// in [0, 4]. Discourages the fused embedding from collapsing onto either
/// source embedding.
torch::Tensor direction_regularization(const torch::Tensor& fused_emb,
                                       const torch::Tensor& visible_emb,
                                       const torch::Tensor& infrared_emb);

/// Sum over the extractor's tap layers of the mean elementwise distance
/// between fused features and the elementwise max of the source features.
/// All images are [B, 1, H, W] in [0, 1]. Differentiable w.r.t. `fused`.
torch::Tensor feature_fidelity_loss(const FidelityFeatureExtractor& extractor,
                                    const torch::Tensor& fused_unit,
                                    const torch::Tensor& ir_unit, const torch::Tensor& vs_unit,
                                    FidelityNorm norm = FidelityNorm::kL1);

struct TotalLossResult {
  torch::Tensor total;  // scalar, grad-carrying
  LossTerms terms;
};

/// The full training objective. The direction term and its regularization
/// are averaged uniformly over {whole image} + {surviving augmented patches}
/// (each evaluated on that item's embeddings); the fidelity term uses the
/// whole images only. Patch batches must already be filtered and augmented
/// (one per batch sample); with zero surviving patches the whole-image term
/// stands alone and a warning is logged.
TotalLossResult total_loss(const TextImageEncoder& encoder,
                           const FidelityFeatureExtractor& extractor,
                           const torch::Tensor& ir_unit, const torch::Tensor& vs_unit,
                           const torch::Tensor& fused_signed,
                           const std::vector<PatchBatch>& patch_batches,
                           const TransitionPair& text_model, const LossWeights& weights = {},
                           FidelityNorm norm = FidelityNorm::kL1);

}  // namespace ldfuse
