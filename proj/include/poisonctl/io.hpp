#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <system_error>

namespace poisonctl {

/// Shortest round-trip decimal form of a double. Deterministic across runs,
/// so emitted CSVs can be compared bitwise.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Parses a double from a trimmed string; returns false on any leftover or
/// malformed input. Accepts an optional leading '+'.
inline bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  if (first == last) return false;
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace poisonctl
