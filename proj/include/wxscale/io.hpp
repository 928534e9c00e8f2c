#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wxscale::io {

std::uint32_t crc32(std::span<const unsigned char> bytes);
std::uint32_t crc32(std::string_view text);
std::string crc32_hex(std::uint32_t crc);
std::uint32_t parse_crc32_hex(std::string_view hex);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string read_text(const std::filesystem::path& path);
std::vector<unsigned char> read_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_atomic(const std::filesystem::path& path, std::string_view text);

/// Minimal CSV table: no quoting, comma separated, header row required.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  /// Column index for `name`; throws a JoinError naming the header row if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
std::vector<std::string_view> split(std::string_view text, char sep);
std::string trim(std::string_view text);

}  // namespace wxscale::io
