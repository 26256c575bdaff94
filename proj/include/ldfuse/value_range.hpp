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

namespace ldfuse {

// The fusion network operates on signed images in [-1, 1] (tanh output).
// Entropy, metrics and file output operate on [0, 1] / 8-bit views. This
// header is the single owner of the conversions between those conventions.
//
// Quantization rule (fixed): pixel = clamp(floor((v + 1) * 127.5 + 0.5), 0, 255),
// i.e. round-half-away-from-zero. Endpoints: -1 -> 0, 0 -> 128, +1 -> 255.

/// [-1, 1] -> [0, 1]. Differentiable; does not clamp.
inline torch::Tensor signed_to_unit(const torch::Tensor& x) { return (x + 1.0) * 0.5; }

/// [0, 1] -> [-1, 1]. Differentiable; does not clamp.
inline torch::Tensor unit_to_signed(const torch::Tensor& x) { return x * 2.0 - 1.0; }

/// [0, 1] -> 8-bit. Not differentiable (quantizes).
inline torch::Tensor unit_to_uint8(const torch::Tensor& x) {
  return torch::clamp(torch::floor(x.detach().to(torch::kFloat64) * 255.0 + 0.5), 0.0, 255.0)
      .to(torch::kUInt8);
}

/// [-1, 1] -> 8-bit. Not differentiable (quantizes).
inline torch::Tensor signed_to_uint8(const torch::Tensor& x) {
  return torch::clamp(torch::floor((x.detach().to(torch::kFloat64) + 1.0) * 127.5 + 0.5), 0.0,
                      255.0)
      .to(torch::kUInt8);
}

/// 8-bit -> [0, 1] float32.
inline torch::Tensor uint8_to_unit(const torch::Tensor& x) {
  return x.to(torch::kFloat32) / 255.0;
}

}  // namespace ldfuse
