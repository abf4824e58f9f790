#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace vqanon::io {

// Shortest decimal form that parses back to the identical double.
std::string exact(double v);

// printf("%.6g") rendering used by reports.
std::string sig6(double v);

// Strict full-string parses; throw FormatError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
std::size_t parse_count(std::string_view s, std::string_view what);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Reads the next line and checks it equals `expected`.
void expect_line(std::istream& in, std::string_view expected);

// Reads "key value..." and returns the tokens after the key.
std::vector<std::string> expect_record(std::istream& in, std::string_view key);

}  // namespace vqanon::io
