#include "vqanon/io/text.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>

#include "vqanon/errors.hpp"

namespace vqanon::io {

std::string exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string sig6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("cannot parse '" + std::string(s) + "' as a number for " +
                      std::string(what));
  }
  return v;
}

long long parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("cannot parse '" + std::string(s) + "' as an integer for " +
                      std::string(what));
  }
  return v;
}

std::size_t parse_count(std::string_view s, std::string_view what) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("cannot parse '" + std::string(s) + "' as a non-negative integer for " +
                      std::string(what));
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

void expect_line(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != expected) {
    throw FormatError("expected '" + std::string(expected) + "', got '" + line +
                      "'");
  }
}

std::vector<std::string> expect_record(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("unexpected end of input, expected '" + std::string(key) +
                      "'");
  }
  auto tokens = split(trim(line), ' ');
  if (tokens.empty() || tokens.front() != key) {
    throw FormatError("expected record '" + std::string(key) + "', got '" + line +
                      "'");
  }
  tokens.erase(tokens.begin());
  return tokens;
}

}  // namespace vqanon::io
