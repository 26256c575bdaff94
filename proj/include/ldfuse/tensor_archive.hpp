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
#include <string>

#include <nlohmann/json.hpp>

namespace ldfuse {

/// Container for named tensors plus a JSON metadata block, persisted in the
/// `.lta` binary format documented in docs/file_formats.md. Encoder weights,
/// feature-extractor weights and training checkpoints all use this format.
struct TensorArchive {
  nlohmann::json meta;
  std::map<std::string, torch::Tensor> tensors;

  void put(const std::string& name, const torch::Tensor& t) { tensors[name] = t; }

  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) > 0; }

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

}  // namespace ldfuse
