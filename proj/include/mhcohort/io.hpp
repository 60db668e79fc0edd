#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mhc {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws SchemaError when missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

// Plain comma-separated text with a header line. Quoting is not supported;
// fields are trimmed of surrounding whitespace.
CsvTable parse_csv(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

double parse_double(const std::string& field, const std::string& what);
long parse_long(const std::string& field, const std::string& what);

// Shortest text that reads back to the same double.
std::string format_double(double x);

}  // namespace mhc
