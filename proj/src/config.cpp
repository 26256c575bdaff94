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
#include "ldfuse/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ldfuse/common.hpp"

namespace ldfuse {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueStore KeyValueStore::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(concat("cannot open config file: ", path.string()));

  KeyValueStore store;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(concat(path.string(), ":", lineno, ": expected 'key = value'"));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError(concat(path.string(), ":", lineno, ": empty key"));
    store.values_[key] = value;
  }
  return store;
}

void KeyValueStore::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  check(eq != std::string::npos, "override must look like key=value, got '", assignment, "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  check(!key.empty(), "override has empty key: '", assignment, "'");
  values_[key] = value;
}

std::string KeyValueStore::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueStore::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    check(pos == it->second.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(concat("config key '", key, "': expected a number, got '", it->second, "'"));
  }
}

std::int64_t KeyValueStore::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(it->second, &pos);
    check(pos == it->second.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(concat("config key '", key, "': expected an integer, got '", it->second, "'"));
  }
}

bool KeyValueStore::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(concat("config key '", key, "': expected a boolean, got '", it->second, "'"));
}

void KeyValueStore::require_known_keys(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.count(key))
      throw ValidationError(concat("unknown config key '", key, "'"));
  }
}

std::string KeyValueStore::describe() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

}  // namespace ldfuse
