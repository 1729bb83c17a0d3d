#ifndef AUTOCOST_CSV_HPP_
#define AUTOCOST_CSV_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace autocost::csv {

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Values of `# key=value` comment lines preceding the header.
  std::vector<std::pair<std::string, std::string>> meta;

  int column(std::string_view name) const;  // -1 if absent
  // Throws ParseError naming the first missing column.
  void require_columns(const std::vector<std::string>& names) const;
  double number(std::size_t row, std::string_view column) const;
  const std::string& text(std::size_t row, std::string_view column) const;
  std::string meta_value(std::string_view key) const;  // "" if absent
};

Table parse(std::string_view text);
Table read_file(const std::string& path);

std::string join(const std::vector<std::string>& fields);

void write_file(const std::string& path, const std::string& contents);
std::string read_text(const std::string& path);

}  // namespace autocost::csv

#endif  // AUTOCOST_CSV_HPP_
