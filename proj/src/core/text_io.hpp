#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cl {

struct Line {
  std::size_t number;  // 1-based
  std::string text;
};

// All lines, trailing '\r' stripped. Throws io naming the path.
std::vector<Line> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// Strict numeric parsing; throw parse with `where` in the message.
double parse_double(std::string_view text, const std::string& where);
long long parse_int(std::string_view text, const std::string& where);
std::uint64_t parse_uint64(std::string_view text, const std::string& where);

std::string format_double(double value);  // round-trippable

std::string location(const std::filesystem::path& path, std::size_t line);

}  // namespace cl
