#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace samspline::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row
};

// Parses a comma separated file with a header line. Accepts LF and CRLF,
// skips blank lines, trims surrounding whitespace from each cell.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text, const std::string& source_name);

// Strict double parse; nullopt for "NA".
std::optional<double> parse_value(std::string_view cell, const std::string& source, int line);
double parse_double(std::string_view cell, const std::string& source, int line);
int parse_int(std::string_view cell, const std::string& source, int line);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace samspline::csv
