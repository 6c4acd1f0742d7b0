#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace evtrack {

/// read_file returns the whole file as bytes; throws std::runtime_error when
/// the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// write_file_atomic writes to a sibling temporary file and renames it over
/// the destination, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// split_csv_line splits on commas; no quoting support (none of our formats
/// need it).
std::vector<std::string_view> split_csv_line(std::string_view line);

/// parse_int64 parses a full decimal integer, rejecting trailing garbage.
bool parse_int64(std::string_view text, std::int64_t& out);
bool parse_double(std::string_view text, double& out);

/// format_double prints with round-trip precision.
std::string format_double(double value);

}  // namespace evtrack
