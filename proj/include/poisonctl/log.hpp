#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace poisonctl {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

namespace detail {

inline LogLevel parse_log_level(const char* s) {
  if (s == nullptr) return LogLevel::kWarn;
  if (std::strcmp(s, "error") == 0) return LogLevel::kError;
  if (std::strcmp(s, "warn") == 0) return LogLevel::kWarn;
  if (std::strcmp(s, "info") == 0) return LogLevel::kInfo;
  if (std::strcmp(s, "debug") == 0) return LogLevel::kDebug;
  return LogLevel::kWarn;
}

}  // namespace detail

/// Process-wide log threshold, taken from POISONCTL_LOG
/// (error|warn|info|debug; default warn). Messages go to stderr.
inline LogLevel log_threshold() {
  static LogLevel level = detail::parse_log_level(std::getenv("POISONCTL_LOG"));
  return level;
}

inline void log_message(LogLevel level, const std::string& msg) {
  if (level > log_threshold()) return;
  const char* tag = "warn";
  switch (level) {
    case LogLevel::kError: tag = "error"; break;
    case LogLevel::kWarn: tag = "warn"; break;
    case LogLevel::kInfo: tag = "info"; break;
    case LogLevel::kDebug: tag = "debug"; break;
  }
  std::fprintf(stderr, "[poisonctl %s] %s\n", tag, msg.c_str());
}

inline void log_info(const std::string& msg) {
  log_message(LogLevel::kInfo, msg);
}
inline void log_warn(const std::string& msg) {
  log_message(LogLevel::kWarn, msg);
}
inline void log_error(const std::string& msg) {
  log_message(LogLevel::kError, msg);
}
inline void log_debug(const std::string& msg) {
  log_message(LogLevel::kDebug, msg);
}

}  // namespace poisonctl
