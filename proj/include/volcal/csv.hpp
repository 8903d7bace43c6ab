#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace volcal {

// Shortest round-trippable decimal form ("%.17g"), so CSVs are both exact
// and byte-stable across runs.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws FormatError if absent.
  std::size_t column(std::string_view name) const;
  const std::string& cell(std::size_t row, std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
};

// Minimal comma-separated format: no quoting, one header line.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(const std::vector<std::string>& cells);
  std::string str() const { return out_; }
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t width_;
  std::string out_;
};

}  // namespace volcal
