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

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace ldfuse {
struct TensorArchive;
}

namespace ldfuse::clip {

/// Hyperparameters of a contrastive text/image encoder pair. The standard
/// pretrained variant is the 32-pixel-patch vision transformer with a 512-d
/// shared embedding; `dev_tiny` is a small randomly initialized variant for
/// development and tests.
struct EncoderDims {
  std::int64_t embed_dim = 512;
  std::int64_t image_size = 224;
  std::int64_t patch_size = 32;
  std::int64_t vision_width = 768;
  std::int64_t vision_layers = 12;
  std::int64_t vision_heads = 12;
  std::int64_t text_width = 512;
  std::int64_t text_layers = 12;
  std::int64_t text_heads = 8;
  std::int64_t context_length = 77;
  std::int64_t vocab_size = 49408;

  static EncoderDims vit_b32() { return {}; }
  static EncoderDims dev_tiny(std::int64_t vocab);

  nlohmann::json to_json() const;
  static EncoderDims from_json(const nlohmann::json& j);
};

/// Pre-norm residual transformer block with the sigmoid-scaled GELU used by
/// the reference encoder.
class ResidualAttentionBlockImpl : public torch::nn::Module {
 public:
  ResidualAttentionBlockImpl(std::int64_t width, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& attn_mask);

 private:
  torch::Tensor attention(const torch::Tensor& x, const torch::Tensor& attn_mask);

  std::int64_t heads_;
  torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr};
  torch::Tensor attn_in_weight_, attn_in_bias_;
  torch::nn::Linear attn_out_{nullptr}, mlp_fc1_{nullptr}, mlp_fc2_{nullptr};
};
TORCH_MODULE(ResidualAttentionBlock);

class VisionTowerImpl : public torch::nn::Module {
 public:
  explicit VisionTowerImpl(const EncoderDims& dims);
  /// img3: [B, 3, S, S] already normalized. Returns projected [B, D].
  torch::Tensor forward(const torch::Tensor& img3);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::Tensor class_embedding_, pos_embedding_, proj_;
  torch::nn::LayerNorm ln_pre_{nullptr}, ln_post_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(VisionTower);

class TextTowerImpl : public torch::nn::Module {
 public:
  explicit TextTowerImpl(const EncoderDims& dims);
  /// tokens: [B, context]. Returns projected [B, D] taken at each row's
  /// highest-id token (the end marker).
  torch::Tensor forward(const torch::Tensor& tokens);

 private:
  torch::nn::Embedding token_embedding_{nullptr};
  torch::Tensor pos_embedding_, projection_, causal_mask_;
  torch::nn::LayerNorm ln_final_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(TextTower);

class ClipModelImpl : public torch::nn::Module {
 public:
  explicit ClipModelImpl(const EncoderDims& dims);

  torch::Tensor encode_image(const torch::Tensor& img3) { return visual_->forward(img3); }
  torch::Tensor encode_text(const torch::Tensor& tokens) { return text_->forward(tokens); }
  double logit_scale() const { return logit_scale_.exp().item<double>(); }
  const EncoderDims& dims() const { return dims_; }

  void freeze();  // inference-only weights; gradients still flow to inputs
  void load_tensors(const TensorArchive& archive);

 private:
  EncoderDims dims_;
  VisionTower visual_{nullptr};
  TextTower text_{nullptr};
  torch::Tensor logit_scale_;
};
TORCH_MODULE(ClipModel);

torch::Tensor quick_gelu(const torch::Tensor& x);

}  // namespace ldfuse::clip
