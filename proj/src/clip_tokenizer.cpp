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
#include "ldfuse/clip/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>

#include "ldfuse/common.hpp"

namespace ldfuse::clip {

namespace {

constexpr const char* kEndOfWord = "</w>";

std::string utf8_of_codepoint(std::uint32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return s;
}

/// Byte -> printable unicode codepoint map (the GPT-2 convention): printable
/// bytes map to themselves, the rest to 256, 257, ... in byte order. The
/// *listing order* below also fixes the order of the first 256 vocab entries.
struct ByteUnicodeTable {
  std::array<std::uint32_t, 256> byte_to_cp{};
  std::vector<std::string> units_in_vocab_order;  // 256 single-codepoint strings

  ByteUnicodeTable() {
    std::vector<int> printable;
    for (int b = '!'; b <= '~'; ++b) printable.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
    std::array<bool, 256> is_printable{};
    for (int b : printable) is_printable[static_cast<std::size_t>(b)] = true;

    for (int b : printable) byte_to_cp[static_cast<std::size_t>(b)] = static_cast<std::uint32_t>(b);
    std::uint32_t next = 256;
    std::vector<int> remapped;
    for (int b = 0; b < 256; ++b)
      if (!is_printable[static_cast<std::size_t>(b)]) {
        byte_to_cp[static_cast<std::size_t>(b)] = next++;
        remapped.push_back(b);
      }
    for (int b : printable) units_in_vocab_order.push_back(utf8_of_codepoint(byte_to_cp[b]));
    for (int b : remapped) units_in_vocab_order.push_back(utf8_of_codepoint(byte_to_cp[b]));
  }
};

const ByteUnicodeTable& byte_table() {
  static const ByteUnicodeTable table;
  return table;
}

std::string merge_key(const std::string& a, const std::string& b) { return a + '\x01' + b; }

bool is_ascii_letter(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
// Non-ASCII bytes are treated as letters; a close ASCII-side approximation of
// the unicode letter classes used by the reference tokenizers.
bool is_letterish(unsigned char c) { return is_ascii_letter(c) || c >= 0x80; }

/// Splits cleaned text into lexer words: contractions, letter runs, single
/// digits, and symbol runs.
std::vector<std::string> lex_words(const std::string& text) {
  static const std::vector<std::string> kContractions = {"'s", "'t",  "'re", "'ve",
                                                         "'m", "'ll", "'d"};
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '\'') {
      bool matched = false;
      for (const auto& suffix : kContractions) {
        if (text.compare(i, suffix.size(), suffix) == 0) {
          words.push_back(suffix);
          i += suffix.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (is_letterish(c)) {
      std::size_t j = i;
      while (j < text.size() && is_letterish(static_cast<unsigned char>(text[j]))) ++j;
      words.push_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    if (is_ascii_digit(c)) {
      words.push_back(text.substr(i, 1));
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size()) {
      const unsigned char d = static_cast<unsigned char>(text[j]);
      if (is_space(d) || is_letterish(d) || is_ascii_digit(d)) break;
      ++j;
    }
    words.push_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string clean_text(const std::string& text) {
  std::string out;
  bool in_space = true;  // also trims leading whitespace
  for (unsigned char c : text) {
    if (is_space(c)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(::tolower(c)));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

BpeTokenizer BpeTokenizer::from_merges(
    const std::vector<std::pair<std::string, std::string>>& merges) {
  BpeTokenizer tok;
  const auto& units = byte_table().units_in_vocab_order;

  std::int64_t id = 0;
  for (const auto& u : units) tok.id_of_[u] = id++;
  for (const auto& u : units) tok.id_of_[u + kEndOfWord] = id++;
  std::int64_t rank = 0;
  for (const auto& [a, b] : merges) {
    check(!a.empty() && !b.empty(), "tokenizer: empty merge symbol");
    tok.merge_rank_[merge_key(a, b)] = rank++;
    tok.id_of_[a + b] = id++;
  }
  tok.id_of_["<|startoftext|>"] = id++;
  tok.id_of_["<|endoftext|>"] = id++;
  return tok;
}

BpeTokenizer BpeTokenizer::from_merges_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw IoError(concat("cannot open tokenizer merges file: ", path.string(),
                         " (expected next to the encoder weight archive)"));
  std::vector<std::pair<std::string, std::string>> merges;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    if (space == std::string::npos)
      throw IoError(concat(path.string(), ": malformed merge line '", line, "'"));
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return from_merges(merges);
}

std::vector<std::string> BpeTokenizer::bpe_word(const std::string& mapped_word) const {
  // Split the mapped word into codepoint symbols, gluing the end-of-word
  // marker to the last one.
  std::vector<std::string> symbols;
  std::size_t i = 0;
  while (i < mapped_word.size()) {
    std::size_t len = 1;
    const unsigned char c = static_cast<unsigned char>(mapped_word[i]);
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    symbols.push_back(mapped_word.substr(i, len));
    i += len;
  }
  if (symbols.empty()) return symbols;
  symbols.back() += kEndOfWord;

  while (symbols.size() >= 2) {
    std::int64_t best_rank = std::numeric_limits<std::int64_t>::max();
    std::size_t best_pos = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = merge_rank_.find(merge_key(symbols[k], symbols[k + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = k;
      }
    }
    if (best_rank == std::numeric_limits<std::int64_t>::max()) break;
    const std::string merged = symbols[best_pos] + symbols[best_pos + 1];
    std::vector<std::string> next;
    next.reserve(symbols.size() - 1);
    for (std::size_t k = 0; k < symbols.size();) {
      if (k + 1 < symbols.size() && symbols[k] == symbols[best_pos] &&
          symbols[k + 1] == symbols[best_pos + 1]) {
        next.push_back(merged);
        k += 2;
      } else {
        next.push_back(symbols[k]);
        ++k;
      }
    }
    symbols = std::move(next);
  }
  return symbols;
}

std::vector<std::int64_t> BpeTokenizer::encode(const std::string& text) const {
  std::vector<std::int64_t> ids;
  for (const auto& word : lex_words(clean_text(text))) {
    std::string mapped;
    for (unsigned char byte : word)
      mapped += utf8_of_codepoint(byte_table().byte_to_cp[byte]);
    for (const auto& symbol : bpe_word(mapped)) {
      auto it = id_of_.find(symbol);
      if (it == id_of_.end())
        throw ValidationError(concat("tokenizer: symbol not in vocabulary: '", symbol, "'"));
      ids.push_back(it->second);
    }
  }
  return ids;
}

torch::Tensor BpeTokenizer::encode_context(const std::string& text,
                                           std::int64_t context_length) const {
  check(!text.empty(), "encode_context: empty text");
  const auto ids = encode(text);
  const auto total = static_cast<std::int64_t>(ids.size()) + 2;
  if (total > context_length)
    throw ValidationError(concat("text tokenizes to ", total,
                                 " tokens, exceeding the encoder's context limit of ",
                                 context_length, " tokens"));
  torch::Tensor row = torch::zeros({context_length}, torch::kInt64);
  row[0] = start_id();
  for (std::size_t i = 0; i < ids.size(); ++i) row[static_cast<std::int64_t>(i) + 1] = ids[i];
  row[static_cast<std::int64_t>(ids.size()) + 1] = end_id();
  return row;
}

}  // namespace ldfuse::clip
