// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace presence {

/// RFC 4180 table with a required header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index or SchemaError naming the missing column.
  std::size_t require(std::string_view name) const;
};

/// Throws SchemaError on an empty input or ragged rows.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
void write_csv(std::ostream& out, const CsvTable& table);

/// Strict numeric field parse; SchemaError names row and column.
double parse_number(std::string_view text, std::string_view where);

}  // namespace presence
