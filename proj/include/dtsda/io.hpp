#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dtsda::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& context);
long long parse_int(const std::string& text, const std::string& context);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

// Plain comma-separated values: no quoting, surrounding whitespace trimmed,
// blank lines skipped.
CsvTable read_csv(const std::filesystem::path& path);
std::vector<std::string> split_csv_line(const std::string& line);

/// Flat `key=value` text with `#` comments. Later keys override earlier ones.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& contents);

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed = 0);

void warn(const std::string& message);

}  // namespace dtsda::io
