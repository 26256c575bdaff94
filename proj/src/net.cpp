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
#include "ldfuse/net.hpp"

#include "ldfuse/common.hpp"
#include "ldfuse/tensor_archive.hpp"

namespace ldfuse {

namespace F = torch::nn::functional;

nlohmann::json NetworkConfig::to_json() const {
  return {{"base_channels", base_channels},
          {"strict_size", strict_size},
          {"encoder_conv_blocks", kEncoderConvBlocks},
          {"encoder_residual_blocks", kEncoderResidualBlocks},
          {"decoder_deconv_layers", kDecoderDeconvLayers}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.base_channels = j.at("base_channels");
  c.strict_size = j.value("strict_size", false);
  return c;
}

torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& gamma,
                    const torch::Tensor& beta, double eps) {
  check(x.dim() == 4, "adain: expected [B, C, H, W], got ", x.sizes());
  auto g = gamma.dim() == 1 ? gamma.unsqueeze(0) : gamma;
  auto b = beta.dim() == 1 ? beta.unsqueeze(0) : beta;
  check(g.size(-1) == x.size(1) && b.size(-1) == x.size(1),
        "adain: gamma/beta length must equal the channel count ", x.size(1));
  auto mean = x.mean({2, 3}, /*keepdim=*/true);
  auto var = (x - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  auto normalized = (x - mean) / torch::sqrt(var + eps);
  return g.unsqueeze(-1).unsqueeze(-1) * normalized + b.unsqueeze(-1).unsqueeze(-1);
}

AdainParamNetImpl::AdainParamNetImpl(std::int64_t base_channels, std::int64_t out_channels) {
  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(2, base_channels, 3).stride(2).padding(1)));
  conv2_ = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(base_channels, base_channels * 2, 3)
                                     .stride(2)
                                     .padding(1)));
  conv3_ = register_module(
      "conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(base_channels * 2, base_channels * 4, 3)
                                     .stride(2)
                                     .padding(1)));
  gamma_head_ = register_module("gamma_head", torch::nn::Linear(base_channels * 4, out_channels));
  beta_head_ = register_module("beta_head", torch::nn::Linear(base_channels * 4, out_channels));
}

std::pair<torch::Tensor, torch::Tensor> AdainParamNetImpl::forward(const torch::Tensor& ir,
                                                                   const torch::Tensor& vs) {
  check(ir.sizes() == vs.sizes(), "generate_adain_params: source shapes differ: ", ir.sizes(),
        " vs ", vs.sizes());
  auto x = torch::cat({ir, vs}, 1);
  x = torch::relu(conv1_->forward(x));
  x = torch::relu(conv2_->forward(x));
  x = torch::relu(conv3_->forward(x));
  x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
  // The gamma head is offset by one so a freshly initialized net starts near
  // an identity rescale.
  return {1.0 + gamma_head_->forward(x), beta_head_->forward(x)};
}

ConvBlockImpl::ConvBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
  norm_ = register_module(
      "norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  return torch::relu(norm_->forward(conv_->forward(x)));
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels) {
  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2_ = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  norm1_ = register_module(
      "norm1", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true)));
  norm2_ = register_module(
      "norm2", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1_->forward(conv1_->forward(x)));
  y = norm2_->forward(conv2_->forward(y));
  return torch::relu(x + y);
}

BranchEncoderImpl::BranchEncoderImpl(std::int64_t base_channels) {
  cb1_ = register_module("cb1", ConvBlock(1, base_channels, 1));
  cb2_ = register_module("cb2", ConvBlock(base_channels, base_channels * 2, 2));
  cb3_ = register_module("cb3", ConvBlock(base_channels * 2, base_channels * 4, 2));
  rb1_ = register_module("rb1", ResidualBlock(base_channels * 4));
  rb2_ = register_module("rb2", ResidualBlock(base_channels * 4));
}

torch::Tensor BranchEncoderImpl::forward(const torch::Tensor& x) {
  return rb2_->forward(rb1_->forward(cb3_->forward(cb2_->forward(cb1_->forward(x)))));
}

FusionNetImpl::FusionNetImpl(const NetworkConfig& config) : config_(config) {
  check(config.base_channels >= 2 && config.base_channels % 2 == 0,
        "NetworkConfig: base_channels must be a positive even number");
  const auto c = config.base_channels;
  const auto fused = config.fused_channels();
  encoder_ir_ = register_module("encoder_ir", BranchEncoder(c));
  encoder_vs_ = register_module("encoder_vs", BranchEncoder(c));
  param_net_ = register_module("param_net", AdainParamNet(c, fused));
  ffm_conv1_ = register_module(
      "ffm_conv1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(fused * 2, fused, 3).padding(1)));
  ffm_conv2_ = register_module(
      "ffm_conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(fused, fused, 3).padding(1)));
  deconv1_ = register_module(
      "deconv1", torch::nn::ConvTranspose2d(
                     torch::nn::ConvTranspose2dOptions(fused, c * 2, 4).stride(2).padding(1)));
  deconv2_ = register_module(
      "deconv2", torch::nn::ConvTranspose2d(
                     torch::nn::ConvTranspose2dOptions(c * 2, c, 4).stride(2).padding(1)));
  deconv3_ = register_module(
      "deconv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c / 2, 3).padding(1)));
  dnorm1_ = register_module("dnorm1", torch::nn::GroupNorm(torch::nn::GroupNormOptions(1, c * 2)));
  dnorm2_ = register_module("dnorm2", torch::nn::GroupNorm(torch::nn::GroupNormOptions(1, c)));
  dnorm3_ = register_module("dnorm3", torch::nn::GroupNorm(torch::nn::GroupNormOptions(1, c / 2)));
  head_ = register_module("head",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(c / 2, 1, 3).padding(1)));
}

torch::Tensor FusionNetImpl::encode_branch(const torch::Tensor& img, Branch branch) {
  check(img.dim() == 4 && img.size(1) == 1, "encode_branch: expected [B, 1, H, W], got ",
        img.sizes());
  check(img.size(2) % NetworkConfig::kTotalStride == 0 &&
            img.size(3) % NetworkConfig::kTotalStride == 0,
        "encode_branch: spatial dims must be divisible by the total stride ",
        NetworkConfig::kTotalStride, ", got ", img.sizes(), " (fuse() handles padding)");
  return branch == Branch::kInfrared ? encoder_ir_->forward(img) : encoder_vs_->forward(img);
}

std::pair<torch::Tensor, torch::Tensor> FusionNetImpl::generate_adain_params(
    const torch::Tensor& ir, const torch::Tensor& vs) {
  return param_net_->forward(ir, vs);
}

torch::Tensor FusionNetImpl::fuse_features(const torch::Tensor& f_ir, const torch::Tensor& f_vs,
                                           const torch::Tensor& gamma,
                                           const torch::Tensor& beta) {
  auto x = torch::cat({f_ir, f_vs}, 1);
  x = torch::relu(adain(ffm_conv1_->forward(x), gamma, beta));
  x = torch::relu(adain(ffm_conv2_->forward(x), gamma, beta));
  return x;
}

torch::Tensor FusionNetImpl::fuse(const torch::Tensor& ir, const torch::Tensor& vs) {
  check(ir.dim() == 4 && ir.size(1) == 1, "fuse: expected [B, 1, H, W], got ", ir.sizes());
  check(ir.sizes() == vs.sizes(), "fuse: modality shapes differ: ", ir.sizes(), " vs ",
        vs.sizes());

  const auto h = ir.size(2);
  const auto w = ir.size(3);
  const auto stride = NetworkConfig::kTotalStride;
  const auto pad_h = (stride - h % stride) % stride;
  const auto pad_w = (stride - w % stride) % stride;

  torch::Tensor ir_in = ir;
  torch::Tensor vs_in = vs;
  if (pad_h != 0 || pad_w != 0) {
    check(!config_.strict_size, "fuse: spatial dims ", ir.sizes(),
          " not divisible by stride ", stride, " (strict mode)");
    log_warn("fuse: padding ", h, "x", w, " by (", pad_h, ", ", pad_w,
             ") to a stride multiple; output is cropped back");
    const auto pad = F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect);
    ir_in = F::pad(ir, pad);
    vs_in = F::pad(vs, pad);
  }

  auto f_ir = encoder_ir_->forward(ir_in);
  auto f_vs = encoder_vs_->forward(vs_in);
  auto [gamma, beta] = param_net_->forward(ir_in, vs_in);
  auto fused = fuse_features(f_ir, f_vs, gamma, beta);

  auto x = torch::relu(dnorm1_->forward(deconv1_->forward(fused)));
  x = torch::relu(dnorm2_->forward(deconv2_->forward(x)));
  x = torch::relu(dnorm3_->forward(deconv3_->forward(x)));
  x = torch::tanh(head_->forward(x));

  if (pad_h != 0 || pad_w != 0) x = x.slice(2, 0, h).slice(3, 0, w);
  return x;
}

void Checkpoint::save(const std::filesystem::path& path, FusionNet& net, const Checkpoint& info) {
  TensorArchive ar;
  ar.meta["format"] = "ldfuse-tensor-archive";
  ar.meta["format_version"] = 1;
  ar.meta["kind"] = "checkpoint";
  ar.meta["network"] = info.config.to_json();
  ar.meta["encoder_variant"] = info.encoder_variant;
  ar.meta["epoch"] = info.epoch;
  for (const auto& item : net->named_parameters()) ar.put("net." + item.key(), item.value());
  if (!info.history_total.empty())
    ar.put("history.l_total",
           torch::tensor(info.history_total, torch::kFloat64));
  ar.save(path);
}

std::pair<FusionNet, Checkpoint> Checkpoint::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw IoError(concat("checkpoint not found: ", path.string()));
  auto ar = TensorArchive::load(path);
  check(ar.meta.value("kind", "") == "checkpoint", path.string(), ": not a checkpoint archive");

  Checkpoint info;
  info.config = NetworkConfig::from_json(ar.meta.at("network"));
  info.encoder_variant = ar.meta.value("encoder_variant", "unknown");
  info.epoch = ar.meta.value("epoch", 0);
  if (ar.contains("history.l_total")) {
    auto hist = ar.at("history.l_total");
    info.history_total.assign(hist.data_ptr<double>(), hist.data_ptr<double>() + hist.numel());
  }

  FusionNet net(info.config);
  torch::NoGradGuard no_grad;
  for (auto& item : net->named_parameters()) {
    const auto& src = ar.at("net." + item.key());
    check(src.sizes() == item.value().sizes(), "checkpoint: shape mismatch for '", item.key(),
          "'");
    item.value().copy_(src.to(item.value().scalar_type()));
  }
  return {net, info};
}

}  // namespace ldfuse
