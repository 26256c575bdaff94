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
#include "ldfuse/losses.hpp"

#include <iomanip>
#include <sstream>

#include "ldfuse/common.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

namespace {

constexpr double kNormEps = 1e-8;

/// Row-wise cosine between [M, D] (or [D]) tensors, epsilon-stabilized.
torch::Tensor stable_cosine(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  auto an = a.norm(2, -1);
  auto bn = b.norm(2, -1);
  if ((an < kNormEps).any().item<bool>() || (bn < kNormEps).any().item<bool>())
    log_warn(what, ": near-zero vector stabilized with eps");
  return (a * b).sum(-1) / (an.clamp_min(kNormEps) * bn.clamp_min(kNormEps));
}

}  // namespace

LossTerms LossTerms::combine(double direction, double regularization, double fidelity,
                             const LossWeights& weights) {
  LossTerms t;
  t.direction = direction;
  t.regularization = regularization;
  t.fidelity = fidelity;
  t.weights = weights;
  t.language_driven = direction + weights.lambda_regularization * regularization;
  t.total = t.language_driven + weights.alpha_fidelity * fidelity;
  return t;
}

std::string LossTerms::log_header() { return "step\tepoch\tlr\tl_d\tphi\tl_v\tl_total"; }

std::string LossTerms::log_row(std::int64_t step, std::int64_t epoch, double lr) const {
  std::ostringstream os;
  os << step << '\t' << epoch << '\t' << std::setprecision(10) << lr << '\t' << std::setprecision(8)
     << direction << '\t' << regularization << '\t' << fidelity << '\t' << total;
  return os.str();
}

torch::Tensor direction_loss(const TransitionPair& image_deltas,
                             const TransitionPair& text_deltas) {
  check(image_deltas.from_visible.defined() && image_deltas.from_infrared.defined() &&
            text_deltas.from_visible.defined() && text_deltas.from_infrared.defined(),
        "direction_loss: undefined transition vectors");
  auto cos_vs = stable_cosine(image_deltas.from_visible, text_deltas.from_visible,
                              "direction_loss(visible)");
  auto cos_ir = stable_cosine(image_deltas.from_infrared, text_deltas.from_infrared,
                              "direction_loss(infrared)");
  return (1.0 - 0.5 * (cos_vs + cos_ir)).mean();
}

torch::Tensor direction_regularization(const torch::Tensor& fused_emb,
                                       const torch::Tensor& visible_emb,
                                       const torch::Tensor& infrared_emb) {
  auto term_vs = (1.0 - stable_cosine(fused_emb, visible_emb, "direction_regularization")).abs();
  auto term_ir = (1.0 - stable_cosine(fused_emb, infrared_emb, "direction_regularization")).abs();
  return (term_vs + term_ir).mean();
}

torch::Tensor feature_fidelity_loss(const FidelityFeatureExtractor& extractor,
                                    const torch::Tensor& fused_unit, const torch::Tensor& ir_unit,
                                    const torch::Tensor& vs_unit, FidelityNorm norm) {
  check(fused_unit.sizes() == ir_unit.sizes() && fused_unit.sizes() == vs_unit.sizes(),
        "feature_fidelity_loss: batches must share shape, got ", fused_unit.sizes(), " / ",
        ir_unit.sizes(), " / ", vs_unit.sizes());
  const auto fused_features = extractor.features(fused_unit);
  const auto ir_features = extractor.features(ir_unit);
  const auto vs_features = extractor.features(vs_unit);

  torch::Tensor loss;
  for (std::size_t k = 0; k < fused_features.size(); ++k) {
    auto target = torch::max(ir_features[k], vs_features[k]);
    auto diff = fused_features[k] - target;
    auto layer_loss = norm == FidelityNorm::kL1 ? diff.abs().mean() : diff.pow(2).mean();
    loss = loss.defined() ? loss + layer_loss : layer_loss;
  }
  return loss;
}

TotalLossResult total_loss(const TextImageEncoder& encoder,
                           const FidelityFeatureExtractor& extractor,
                           const torch::Tensor& ir_unit, const torch::Tensor& vs_unit,
                           const torch::Tensor& fused_signed,
                           const std::vector<PatchBatch>& patch_batches,
                           const TransitionPair& text_model, const LossWeights& weights,
                           FidelityNorm norm) {
  check(ir_unit.dim() == 4 && ir_unit.sizes() == vs_unit.sizes() &&
            ir_unit.sizes() == fused_signed.sizes(),
        "total_loss: ir/vs/fused must be matching [B, 1, H, W] batches");

  const auto fused_unit = signed_to_unit(fused_signed);

  // Whole images are always items; surviving augmented patches join them.
  std::vector<torch::Tensor> fused_items = {fused_unit};
  std::vector<torch::Tensor> ir_items = {ir_unit};
  std::vector<torch::Tensor> vs_items = {vs_unit};

  std::size_t kept_count = 0;
  std::size_t record_count = 0;
  for (const auto& batch : patch_batches) {
    record_count += batch.records.size();
    for (const auto& view : batch.augmented_views) {
      fused_items.push_back(signed_to_unit(view.fused).unsqueeze(0).unsqueeze(0));
      ir_items.push_back(view.ir.unsqueeze(0).unsqueeze(0));
      vs_items.push_back(view.vs.unsqueeze(0).unsqueeze(0));
      ++kept_count;
    }
  }
  if (record_count > 0 && kept_count == 0)
    log_warn("total_loss: no patch survived entropy filtering, "
             "whole-image term stands alone");

  // Patch views share one spatial size; whole images may differ, so they are
  // embedded separately and concatenated in embedding space.
  auto embed_group = [&](const std::vector<torch::Tensor>& group) {
    std::vector<torch::Tensor> embedded;
    embedded.push_back(encoder.encode_image(group.front()));
    if (group.size() > 1) {
      std::vector<torch::Tensor> patches(group.begin() + 1, group.end());
      embedded.push_back(encoder.encode_image(torch::cat(patches, 0)));
    }
    return torch::cat(embedded, 0);  // [M, D]
  };
  auto fused_emb = embed_group(fused_items);
  auto ir_emb = embed_group(ir_items);
  auto vs_emb = embed_group(vs_items);

  TransitionPair image_deltas;
  image_deltas.from_visible = fused_emb - vs_emb;
  image_deltas.from_infrared = fused_emb - ir_emb;

  auto direction = direction_loss(image_deltas, text_model);
  auto regularization = direction_regularization(fused_emb, vs_emb, ir_emb);
  auto fidelity = feature_fidelity_loss(extractor, fused_unit, ir_unit, vs_unit, norm);

  TotalLossResult result;
  result.total = direction + weights.lambda_regularization * regularization +
                 weights.alpha_fidelity * fidelity;
  result.terms = LossTerms::combine(direction.item<double>(), regularization.item<double>(),
                                    fidelity.item<double>(), weights);
  return result;
}

}  // namespace ldfuse
