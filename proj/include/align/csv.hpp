#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace align::csv {

/// A parsed CSV table: header plus rows with the same field count. Quoted
/// fields ("a,b" and doubled quotes) are supported; CRLF line endings are
/// accepted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::optional<std::size_t> column(std::string_view name) const;
};

Table read(std::istream& in);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest round-trippable decimal form.
std::string format_double(double value);

}  // namespace align::csv
