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
#include "ldfuse/common.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace ldfuse {

namespace {
std::atomic<int> g_threshold{static_cast<int>(LogLevel::kInfo)};
std::mutex g_log_mutex;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo:  return "info";
    case LogLevel::kWarn:  return "warn";
    case LogLevel::kError: return "error";
  }
  return "?";
}
}  // namespace

void set_log_threshold(LogLevel level) { g_threshold = static_cast<int>(level); }

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) < g_threshold.load()) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[ldfuse:" << level_tag(level) << "] " << msg << "\n";
}

}  // namespace ldfuse
