#include "hetfx/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "hetfx/error.hpp"

namespace hetfx {

std::optional<std::size_t> CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  return std::nullopt;
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (ch == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field near line " + std::to_string(line));
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::size_t line = 1;
  std::vector<std::string> fields;
  if (!read_record(in, table.header, line)) throw DataError("csv: empty input");
  if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0)
    table.header[0].erase(0, 3);
  while (read_record(in, fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != table.header.size())
      throw DataError("csv: record ending at line " + std::to_string(line - 1) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    table.rows.push_back(fields);
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  std::size_t b = 0, e = cell.size();
  while (b < e && (cell[b] == ' ' || cell[b] == '\t')) ++b;
  while (e > b && (cell[e - 1] == ' ' || cell[e - 1] == '\t')) --e;
  if (b == e) return std::nullopt;
  if (cell[b] == '+') ++b;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data() + b, cell.data() + e, value);
  if (ec != std::errc() || ptr != cell.data() + e || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace hetfx
