#pragma once

// Small text helpers shared by the CSV / JSONL writers and readers.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dncc {

// Shortest representation that parses back to the same double.
std::string format_double(double v);
// Parses the whole of `s` as a double; throws FormatError(line) on failure.
double parse_double(std::string_view s, std::size_t line);
long long parse_int(std::string_view s, std::size_t line);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view text);

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 14695981039346656037ull);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace dncc
