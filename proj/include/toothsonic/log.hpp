#pragma once

// Minimal stderr logger. Level comes from TOOTHSONIC_LOG (error, info, debug);
// default is error.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace toothsonic {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("TOOTHSONIC_LOG");
    const std::string_view s = v ? v : "";
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return level;
}

inline void log(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mutex;
  static constexpr std::string_view names[] = {"error", "info", "debug"};
  std::lock_guard lock(mutex);
  std::cerr << '[' << names[static_cast<int>(level)] << "] " << message << '\n';
}

inline void log_info(std::string_view message) { log(LogLevel::Info, message); }
inline void log_debug(std::string_view message) { log(LogLevel::Debug, message); }

}  // namespace toothsonic
