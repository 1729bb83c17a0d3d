#include "autocost/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "autocost/errors.hpp"

namespace autocost::csv {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw ParseError("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ParseError("not a number: '" + std::string(text) + "'");
  return value;
}

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void Table::require_columns(const std::vector<std::string>& names) const {
  for (const auto& n : names) {
    if (column(n) < 0) throw ParseError("missing column '" + n + "'");
  }
}

const std::string& Table::text(std::size_t row, std::string_view name) const {
  const int c = column(name);
  if (c < 0) throw ParseError("missing column '" + std::string(name) + "'");
  return rows.at(row).at(static_cast<std::size_t>(c));
}

double Table::number(std::size_t row, std::string_view name) const {
  try {
    return parse_double(text(row, name));
  } catch (const ParseError&) {
    throw ParseError("column '" + std::string(name) + "' row " +
                     std::to_string(row) + ": not a number");
  }
}

std::string Table::meta_value(std::string_view key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return "";
}

Table parse(std::string_view text) {
  Table t;
  std::size_t start = 0;
  bool have_header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      const auto eq = body.find('=');
      if (eq != std::string_view::npos)
        t.meta.emplace_back(std::string(body.substr(0, eq)),
                            std::string(body.substr(eq + 1)));
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header.size())
        throw ParseError("row " + std::to_string(t.rows.size()) + " has " +
                         std::to_string(fields.size()) + " fields, expected " +
                         std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw ParseError("empty CSV");
  return t;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Table read_file(const std::string& path) { return parse(read_text(path)); }

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw ParseError("write failed: " + path);
}

}  // namespace autocost::csv
