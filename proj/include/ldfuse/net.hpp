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
#include <string>

#include <nlohmann/json.hpp>

namespace ldfuse {

/// Generator hyperparameters. The block structure is fixed (three
/// convolution blocks and two residual blocks per encoder branch; three
/// transposed-convolution decoder layers plus a tanh head); only the widths
/// are configurable.
struct NetworkConfig {
  std::int64_t base_channels = 32;  // doubled by each striding conv block
  bool strict_size = false;         // error instead of padding on indivisible dims

  static constexpr int kEncoderConvBlocks = 3;
  static constexpr int kEncoderResidualBlocks = 2;
  static constexpr int kDecoderDeconvLayers = 3;
  static constexpr std::int64_t kTotalStride = 4;  // two striding conv blocks

  std::int64_t fused_channels() const { return base_channels * 4; }

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Adaptive instance normalization: per sample and channel, the input is
/// standardized over its spatial extent and rescaled as
/// `gamma * (x - mean) / std + beta`. gamma/beta are [B, C] (or [C]).
torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& gamma,
                    const torch::Tensor& beta, double eps = 1e-5);

/// Generates the AdaIN parameters dynamically from the source image pair:
/// strided convolutions with ReLU over the channel-concatenated sources,
/// global average pooling, then two linear heads.
class AdainParamNetImpl : public torch::nn::Module {
 public:
  AdainParamNetImpl(std::int64_t base_channels, std::int64_t out_channels);
  /// ir/vs: [B, 1, H, W] in [-1, 1]. Returns (gamma, beta), each [B, out].
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& ir,
                                                  const torch::Tensor& vs);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::Linear gamma_head_{nullptr}, beta_head_{nullptr};
};
TORCH_MODULE(AdainParamNet);

class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
};
TORCH_MODULE(ConvBlock);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::InstanceNorm2d norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// One encoder branch: three conv blocks (stride 1, 2, 2) + two residual
/// blocks. Both branches share this architecture but never their weights.
class BranchEncoderImpl : public torch::nn::Module {
 public:
  explicit BranchEncoderImpl(std::int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBlock cb1_{nullptr}, cb2_{nullptr}, cb3_{nullptr};
  ResidualBlock rb1_{nullptr}, rb2_{nullptr};
};
TORCH_MODULE(BranchEncoder);

enum class Branch { kInfrared, kVisible };

/// The trainable fusion generator: two-branch encoder, AdaIN-normalized
/// feature fusion of the concatenated branch features, and a transposed-
/// convolution decoder with a tanh head. Works on [-1, 1] images.
class FusionNetImpl : public torch::nn::Module {
 public:
  explicit FusionNetImpl(const NetworkConfig& config = {});

  /// Per-branch features for a [B, 1, H, W] batch in [-1, 1]. H and W must
  /// be divisible by the total stride.
  torch::Tensor encode_branch(const torch::Tensor& img, Branch branch);

  /// AdaIN parameters for the fused feature channels, generated from the
  /// source pair; each of gamma/beta is [B, fused_channels].
  std::pair<torch::Tensor, torch::Tensor> generate_adain_params(const torch::Tensor& ir,
                                                                const torch::Tensor& vs);

  /// Full fusion pass: [B, 1, H, W] pair in [-1, 1] -> fused image of the
  /// same shape, values in (-1, 1). Pads indivisible sizes reflectively and
  /// crops back (or throws in strict mode).
  torch::Tensor fuse(const torch::Tensor& ir, const torch::Tensor& vs);

  const NetworkConfig& config() const { return config_; }

 private:
  torch::Tensor fuse_features(const torch::Tensor& f_ir, const torch::Tensor& f_vs,
                              const torch::Tensor& gamma, const torch::Tensor& beta);

  NetworkConfig config_;
  BranchEncoder encoder_ir_{nullptr}, encoder_vs_{nullptr};
  AdainParamNet param_net_{nullptr};
  torch::nn::Conv2d ffm_conv1_{nullptr}, ffm_conv2_{nullptr};
  torch::nn::ConvTranspose2d deconv1_{nullptr}, deconv2_{nullptr};
  torch::nn::Conv2d deconv3_{nullptr}, head_{nullptr};
  torch::nn::GroupNorm dnorm1_{nullptr}, dnorm2_{nullptr}, dnorm3_{nullptr};
};
TORCH_MODULE(FusionNet);

/// Versioned checkpoint: network weights + NetworkConfig + the embedding
/// encoder variant the model was trained against + epoch counter + loss
/// history. Format documented in docs/file_formats.md.
struct Checkpoint {
  NetworkConfig config;
  std::string encoder_variant = "untrained";
  std::int64_t epoch = 0;
  std::vector<double> history_total;  // per logged step

  static void save(const std::filesystem::path& path, FusionNet& net, const Checkpoint& info);
  static std::pair<FusionNet, Checkpoint> load(const std::filesystem::path& path);
};

}  // namespace ldfuse
