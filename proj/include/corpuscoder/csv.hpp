#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace corpuscoder::csv {

/// A parsed RFC 4180 table. `rows` excludes the header; every row has
/// exactly header.size() fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const;
};

/// Parses CSV text (comma separator, '"' quoting, CRLF or LF line ends,
/// optional UTF-8 BOM, lines starting with '#' before the header skipped).
/// Throws Error{MalformedCsv} on unbalanced quotes or ragged rows.
Table parse(std::string_view text);

/// Quotes a field only when it contains ',', '"', CR or LF.
std::string escape(std::string_view field);

void append_row(std::string& out, const std::vector<std::string>& fields);

std::string write(const Table& table);

}  // namespace corpuscoder::csv
