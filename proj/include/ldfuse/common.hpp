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

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ldfuse {

/// Raised when an operation receives inputs that violate its contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a file, weight archive or checkpoint cannot be read/written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  format_into(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  detail::format_into(os, std::forward<Args>(args)...);
  return os.str();
}

template <typename... Args>
void check(bool cond, Args&&... msg) {
  if (!cond) throw ValidationError(concat(std::forward<Args>(msg)...));
}

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

/// Minimal process-wide logger. Messages go to stderr so that machine-readable
/// output on stdout (tables, training records) stays clean.
void log_message(LogLevel level, const std::string& msg);
void set_log_threshold(LogLevel level);

template <typename... Args>
void log_warn(Args&&... args) {
  log_message(LogLevel::kWarn, concat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_info(Args&&... args) {
  log_message(LogLevel::kInfo, concat(std::forward<Args>(args)...));
}

/// Deterministic stream of derived seeds. Every stochastic component takes an
/// explicit seed so that runs are reproducible end to end.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t root) : rng_(root) {}
  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

}  // namespace ldfuse
