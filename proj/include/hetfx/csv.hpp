#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace hetfx {

// RFC-4180 style table: header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column_index(const std::string& name) const;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

// Quotes a field when it contains a separator, quote, or line break.
std::string csv_escape(const std::string& field);

// Strict numeric parse: the whole cell must be a finite number.
std::optional<double> parse_number(const std::string& cell);

}  // namespace hetfx
