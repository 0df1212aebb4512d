#pragma once

#include <string>
#include <vector>

namespace sec {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& text);

// Minimal CSV table: comma-separated, no quoting. Fields must not contain
// commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  std::string to_string() const;
  static CsvTable parse(const std::string& text);
};

}  // namespace sec
