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
#include "ldfuse/vgg.hpp"

#include <algorithm>

#include "ldfuse/common.hpp"
#include "ldfuse/tensor_archive.hpp"

namespace ldfuse {

namespace {
// ImageNet channel statistics, as published with the pretrained extractor.
constexpr std::array<double, 3> kMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kStd = {0.229, 0.224, 0.225};

torch::Tensor stat_tensor(const std::array<double, 3>& v) {
  return torch::tensor({v[0], v[1], v[2]}, torch::kFloat32).view({3, 1, 1});
}
}  // namespace

FidelityFeatureExtractor FidelityFeatureExtractor::load(
    const std::filesystem::path& archive_path) {
  if (!std::filesystem::exists(archive_path))
    throw IoError(concat(
        "fidelity-extractor weights not found at ", archive_path.string(),
        "; convert pretrained weights with scripts/export_pretrained.py, or generate ",
        "development weights with `ldfuse dev-weights`"));
  auto ar = TensorArchive::load(archive_path);
  check(ar.meta.value("kind", "") == "fidelity-extractor",
        archive_path.string(), ": not a fidelity-extractor archive");

  FidelityFeatureExtractor fx;
  fx.pool_after_ = ar.meta.value("pool_after", std::vector<int>{2, 4, 8});
  fx.taps_ = ar.meta.value("taps", std::vector<int>{3, 5, 10});
  const auto layers = static_cast<int>(ar.meta.at("channels").size());
  check(!fx.taps_.empty() && *std::max_element(fx.taps_.begin(), fx.taps_.end()) <= layers,
        "fidelity-extractor archive: tap index exceeds layer count");
  for (int k = 1; k <= layers; ++k) {
    fx.weights_.push_back(ar.at(concat("conv", k, ".weight")));
    fx.biases_.push_back(ar.at(concat("conv", k, ".bias")));
  }
  std::vector<double> mean = ar.meta.value("image_mean",
                                           std::vector<double>(kMean.begin(), kMean.end()));
  std::vector<double> stdv = ar.meta.value("image_std",
                                           std::vector<double>(kStd.begin(), kStd.end()));
  fx.image_mean_ = torch::tensor(mean, torch::kFloat32).view({3, 1, 1});
  fx.image_std_ = torch::tensor(stdv, torch::kFloat32).view({3, 1, 1});
  return fx;
}

FidelityFeatureExtractor FidelityFeatureExtractor::random_stack(
    const std::vector<std::int64_t>& channels, std::uint64_t seed) {
  torch::manual_seed(seed);
  FidelityFeatureExtractor fx;
  std::int64_t in = 3;
  for (auto out : channels) {
    // Fan-in scaled init keeps activations in a sane range through the stack.
    const double scale = std::sqrt(2.0 / (in * 9.0));
    fx.weights_.push_back(torch::randn({out, in, 3, 3}) * scale);
    fx.biases_.push_back(torch::zeros({out}));
    in = out;
  }
  fx.image_mean_ = stat_tensor(kMean);
  fx.image_std_ = stat_tensor(kStd);
  return fx;
}

FidelityFeatureExtractor FidelityFeatureExtractor::dev_tiny(std::uint64_t seed) {
  return random_stack({8, 8, 16, 16, 24, 24, 24, 24, 32, 32}, seed);
}

void FidelityFeatureExtractor::append_to_archive(TensorArchive& ar) const {
  std::vector<std::int64_t> channels;
  for (const auto& w : weights_) channels.push_back(w.size(0));
  ar.meta["kind"] = "fidelity-extractor";
  ar.meta["arch"] = "vgg19-conv10";
  ar.meta["channels"] = channels;
  ar.meta["pool_after"] = pool_after_;
  ar.meta["taps"] = taps_;
  ar.meta["image_mean"] = std::vector<double>(kMean.begin(), kMean.end());
  ar.meta["image_std"] = std::vector<double>(kStd.begin(), kStd.end());
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    ar.put(concat("conv", k + 1, ".weight"), weights_[k]);
    ar.put(concat("conv", k + 1, ".bias"), biases_[k]);
  }
}

void FidelityFeatureExtractor::to_double() {
  for (auto& w : weights_) w = w.to(torch::kFloat64);
  for (auto& b : biases_) b = b.to(torch::kFloat64);
  image_mean_ = image_mean_.to(torch::kFloat64);
  image_std_ = image_std_.to(torch::kFloat64);
  dtype_ = torch::kFloat64;
}

std::vector<torch::Tensor> FidelityFeatureExtractor::features(
    const torch::Tensor& unit_img) const {
  check(unit_img.dim() == 4 && unit_img.size(1) == 1,
        "fidelity features: expected [B, 1, H, W], got ", unit_img.sizes());
  check(unit_img.size(2) >= 8 && unit_img.size(3) >= 8,
        "fidelity features: image too small, got ", unit_img.sizes());

  namespace F = torch::nn::functional;
  auto x = unit_img.to(dtype_).expand({unit_img.size(0), 3, unit_img.size(2), unit_img.size(3)});
  x = (x - image_mean_) / image_std_;

  std::vector<torch::Tensor> out;
  const int max_tap = *std::max_element(taps_.begin(), taps_.end());
  for (int k = 1; k <= max_tap; ++k) {
    x = F::conv2d(x, weights_[static_cast<std::size_t>(k - 1)],
                  F::Conv2dFuncOptions().bias(biases_[static_cast<std::size_t>(k - 1)]).padding(1));
    x = torch::relu(x);
    if (std::find(taps_.begin(), taps_.end(), k) != taps_.end()) out.push_back(x);
    if (std::find(pool_after_.begin(), pool_after_.end(), k) != pool_after_.end() && k < max_tap)
      x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
  }
  return out;
}

}  // namespace ldfuse
