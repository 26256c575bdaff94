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
#include <vector>

namespace ldfuse {

/// Frozen convolutional feature extractor (VGG-19-style stack through its
/// 10th convolution) used by the feature-fidelity loss. Gray input is
/// replicated to 3 channels and normalized with the extractor's published
/// channel statistics. Differentiable w.r.t. the input image.
class FidelityFeatureExtractor {
 public:
  static FidelityFeatureExtractor load(const std::filesystem::path& archive_path);
  /// Thin randomly initialized stack for development and tests.
  static FidelityFeatureExtractor dev_tiny(std::uint64_t seed);

  /// Feature maps after the tap convolution layers (default taps 3, 5, 10,
  /// counting convolutions only; taken after the ReLU).
  std::vector<torch::Tensor> features(const torch::Tensor& unit_img) const;

  const std::vector<int>& taps() const { return taps_; }
  void to_double();

 private:
  FidelityFeatureExtractor() = default;
  friend void write_dev_weights(const std::filesystem::path&, std::uint64_t);
  static FidelityFeatureExtractor random_stack(const std::vector<std::int64_t>& channels,
                                               std::uint64_t seed);
  void append_to_archive(struct TensorArchive& ar) const;

  std::vector<torch::Tensor> weights_;  // [out, in, 3, 3] per conv
  std::vector<torch::Tensor> biases_;
  std::vector<int> pool_after_ = {2, 4, 8};
  std::vector<int> taps_ = {3, 5, 10};
  torch::Tensor image_mean_, image_std_;  // [3, 1, 1]
  torch::ScalarType dtype_ = torch::kFloat32;
};

}  // namespace ldfuse
