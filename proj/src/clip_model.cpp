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
#include "ldfuse/clip/model.hpp"

#include <cmath>
#include <limits>

#include "ldfuse/common.hpp"
#include "ldfuse/tensor_archive.hpp"

namespace ldfuse::clip {

EncoderDims EncoderDims::dev_tiny(std::int64_t vocab) {
  EncoderDims d;
  d.embed_dim = 64;
  d.image_size = 224;
  d.patch_size = 32;
  d.vision_width = 64;
  d.vision_layers = 2;
  d.vision_heads = 2;
  d.text_width = 64;
  d.text_layers = 2;
  d.text_heads = 2;
  d.context_length = 77;
  d.vocab_size = vocab;
  return d;
}

nlohmann::json EncoderDims::to_json() const {
  return {{"embed_dim", embed_dim},       {"image_size", image_size},
          {"patch_size", patch_size},     {"vision_width", vision_width},
          {"vision_layers", vision_layers}, {"vision_heads", vision_heads},
          {"text_width", text_width},     {"text_layers", text_layers},
          {"text_heads", text_heads},     {"context_length", context_length},
          {"vocab_size", vocab_size}};
}

EncoderDims EncoderDims::from_json(const nlohmann::json& j) {
  EncoderDims d;
  d.embed_dim = j.at("embed_dim");
  d.image_size = j.at("image_size");
  d.patch_size = j.at("patch_size");
  d.vision_width = j.at("vision_width");
  d.vision_layers = j.at("vision_layers");
  d.vision_heads = j.at("vision_heads");
  d.text_width = j.at("text_width");
  d.text_layers = j.at("text_layers");
  d.text_heads = j.at("text_heads");
  d.context_length = j.at("context_length");
  d.vocab_size = j.at("vocab_size");
  return d;
}

torch::Tensor quick_gelu(const torch::Tensor& x) { return x * torch::sigmoid(1.702 * x); }

ResidualAttentionBlockImpl::ResidualAttentionBlockImpl(std::int64_t width, std::int64_t heads)
    : heads_(heads) {
  check(width % heads == 0, "attention width must be divisible by head count");
  ln1_ = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  ln2_ = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  attn_in_weight_ = register_parameter(
      "attn_in_weight", torch::empty({3 * width, width}).normal_(0.0, std::pow(width, -0.5)));
  attn_in_bias_ = register_parameter("attn_in_bias", torch::zeros({3 * width}));
  attn_out_ = register_module("attn_out", torch::nn::Linear(width, width));
  mlp_fc1_ = register_module("mlp_fc1", torch::nn::Linear(width, width * 4));
  mlp_fc2_ = register_module("mlp_fc2", torch::nn::Linear(width * 4, width));
}

torch::Tensor ResidualAttentionBlockImpl::attention(const torch::Tensor& x,
                                                    const torch::Tensor& attn_mask) {
  const auto batch = x.size(0);
  const auto len = x.size(1);
  const auto width = x.size(2);
  const auto head_dim = width / heads_;

  auto qkv = torch::nn::functional::linear(x, attn_in_weight_, attn_in_bias_);
  auto chunks = qkv.chunk(3, /*dim=*/-1);
  auto split = [&](const torch::Tensor& t) {
    return t.view({batch, len, heads_, head_dim}).transpose(1, 2);  // [B, H, L, dh]
  };
  auto q = split(chunks[0]);
  auto k = split(chunks[1]);
  auto v = split(chunks[2]);

  auto scores = q.matmul(k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  if (attn_mask.defined()) scores = scores + attn_mask.to(scores.scalar_type());
  auto weights = torch::softmax(scores, -1);
  auto out = weights.matmul(v).transpose(1, 2).reshape({batch, len, width});
  return attn_out_->forward(out);
}

torch::Tensor ResidualAttentionBlockImpl::forward(const torch::Tensor& x,
                                                  const torch::Tensor& attn_mask) {
  auto y = x + attention(ln1_->forward(x), attn_mask);
  y = y + mlp_fc2_->forward(quick_gelu(mlp_fc1_->forward(ln2_->forward(y))));
  return y;
}

VisionTowerImpl::VisionTowerImpl(const EncoderDims& dims) {
  check(dims.image_size % dims.patch_size == 0, "image size must be a patch multiple");
  const auto grid = dims.image_size / dims.patch_size;
  const double scale = std::pow(static_cast<double>(dims.vision_width), -0.5);

  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, dims.vision_width, dims.patch_size)
                                     .stride(dims.patch_size)
                                     .bias(false)));
  class_embedding_ =
      register_parameter("class_embedding", scale * torch::randn({dims.vision_width}));
  pos_embedding_ = register_parameter(
      "pos_embedding", scale * torch::randn({grid * grid + 1, dims.vision_width}));
  ln_pre_ = register_module(
      "ln_pre", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dims.vision_width})));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < dims.vision_layers; ++i)
    blocks_->push_back(ResidualAttentionBlock(dims.vision_width, dims.vision_heads));
  ln_post_ = register_module(
      "ln_post", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dims.vision_width})));
  proj_ = register_parameter("proj",
                             scale * torch::randn({dims.vision_width, dims.embed_dim}));
}

torch::Tensor VisionTowerImpl::forward(const torch::Tensor& img3) {
  const auto batch = img3.size(0);
  auto x = conv1_->forward(img3);                       // [B, W, g, g]
  x = x.flatten(2).transpose(1, 2);                     // [B, g*g, W]
  auto cls = class_embedding_.to(x.scalar_type())
                 .unsqueeze(0)
                 .unsqueeze(0)
                 .expand({batch, 1, x.size(2)});
  x = torch::cat({cls, x}, 1) + pos_embedding_.unsqueeze(0);
  x = ln_pre_->forward(x);
  for (auto& block : *blocks_)
    x = block->as<ResidualAttentionBlockImpl>()->forward(x, torch::Tensor());
  x = ln_post_->forward(x.select(1, 0));  // class token
  return x.matmul(proj_);
}

TextTowerImpl::TextTowerImpl(const EncoderDims& dims) {
  token_embedding_ = register_module(
      "token_embedding", torch::nn::Embedding(dims.vocab_size, dims.text_width));
  torch::nn::init::normal_(token_embedding_->weight, 0.0, 0.02);
  pos_embedding_ = register_parameter(
      "pos_embedding", 0.01 * torch::randn({dims.context_length, dims.text_width}));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < dims.text_layers; ++i)
    blocks_->push_back(ResidualAttentionBlock(dims.text_width, dims.text_heads));
  ln_final_ = register_module(
      "ln_final", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dims.text_width})));
  projection_ = register_parameter(
      "projection",
      std::pow(static_cast<double>(dims.text_width), -0.5) *
          torch::randn({dims.text_width, dims.embed_dim}));

  auto mask = torch::full({dims.context_length, dims.context_length},
                          -std::numeric_limits<float>::infinity());
  mask.triu_(1);  // zero on and below the diagonal
  causal_mask_ = register_buffer("causal_mask", mask);
}

torch::Tensor TextTowerImpl::forward(const torch::Tensor& tokens) {
  check(tokens.dim() == 2 && tokens.size(1) == pos_embedding_.size(0),
        "text tokens must be [B, context]");
  auto x = token_embedding_->forward(tokens) + pos_embedding_.unsqueeze(0);
  for (auto& block : *blocks_)
    x = block->as<ResidualAttentionBlockImpl>()->forward(x, causal_mask_);
  x = ln_final_->forward(x);
  auto eot = tokens.argmax(-1);  // the end marker holds the highest id
  auto pooled = x.index({torch::arange(x.size(0)), eot});
  return pooled.matmul(projection_);
}

ClipModelImpl::ClipModelImpl(const EncoderDims& dims) : dims_(dims) {
  visual_ = register_module("visual", VisionTower(dims));
  text_ = register_module("text", TextTower(dims));
  logit_scale_ =
      register_parameter("logit_scale", torch::tensor(std::log(1.0 / 0.07)));
}

void ClipModelImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

void ClipModelImpl::load_tensors(const TensorArchive& archive) {
  torch::NoGradGuard no_grad;
  for (auto& item : named_parameters()) {
    const auto& src = archive.at(item.key());
    check(src.sizes() == item.value().sizes(), "encoder archive: shape mismatch for '",
          item.key(), "': ", src.sizes(), " vs ", item.value().sizes());
    item.value().copy_(src.to(item.value().scalar_type()));
  }
}

}  // namespace ldfuse::clip
