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

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace ldfuse {

/// Flat key/value experiment configuration. The on-disk format is one
/// `key = value` assignment per line, `#` starts a comment, and nesting is
/// expressed with dotted keys (`train.lr = 0.001`). CLI `--set key=value`
/// overrides are applied on top of file values.
class KeyValueStore {
 public:
  KeyValueStore() = default;

  static KeyValueStore from_file(const std::filesystem::path& path);

  /// Parses "key=value" (also accepts "key = value") and stores it.
  void apply_override(const std::string& assignment);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Rejects any key not present in `known` (typo guard for experiment sweeps).
  void require_known_keys(const std::set<std::string>& known) const;

  /// Sorted `key = value` lines; logged before any work starts.
  std::string describe() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ldfuse
