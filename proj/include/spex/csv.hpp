#pragma once

#include <optional>
#include <string>
#include <vector>

namespace spex {

// Minimal CSV support: comma-separated, no quoting, '#' comment lines,
// header row required. Blank fields are preserved as empty strings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // column index by name; throws if absent
  std::size_t col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin = "<string>");

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// fixed 9-significant-digit formatting used for every numeric artifact
std::string fmt_g9(double v);

double parse_double(const std::string& s, const std::string& context,
                    std::size_t line);
long parse_long(const std::string& s, const std::string& context,
                std::size_t line);

}  // namespace spex
