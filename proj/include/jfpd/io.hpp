#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace jfpd {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double v);

/// RFC 4180 quoting, LF line endings. Written to a temp file then renamed.
void emit_csv(const CsvTable& table, const std::filesystem::path& path);
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Writes bytes to path via a sibling temporary and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace jfpd
