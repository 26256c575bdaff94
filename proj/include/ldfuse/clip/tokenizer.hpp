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
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace ldfuse::clip {

/// Byte-level BPE tokenizer compatible with the contrastive vision-language
/// encoder convention: 256 byte units, 256 end-of-word units, learned merges,
/// and <|startoftext|> / <|endoftext|> appended last. Text is lowercased and
/// whitespace-collapsed before lexing.
class BpeTokenizer {
 public:
  /// Merges file: one `left right` pair per line, `#`-prefixed lines ignored.
  static BpeTokenizer from_merges_file(const std::filesystem::path& path);
  static BpeTokenizer from_merges(const std::vector<std::pair<std::string, std::string>>& merges);

  /// BPE ids of the text, without start/end markers.
  std::vector<std::int64_t> encode(const std::string& text) const;

  /// [context_length] int64 row: start marker, ids, end marker, zero padding.
  /// Throws if the text does not fit the context.
  torch::Tensor encode_context(const std::string& text, std::int64_t context_length) const;

  std::int64_t vocab_size() const { return static_cast<std::int64_t>(id_of_.size()); }
  std::int64_t start_id() const { return vocab_size() - 2; }
  std::int64_t end_id() const { return vocab_size() - 1; }

 private:
  BpeTokenizer() = default;
  std::vector<std::string> bpe_word(const std::string& mapped_word) const;

  std::unordered_map<std::string, std::int64_t> id_of_;
  std::unordered_map<std::string, std::int64_t> merge_rank_;  // "left\x01right" -> rank
};

}  // namespace ldfuse::clip
