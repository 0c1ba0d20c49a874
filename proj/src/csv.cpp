#include "corpuscoder/csv.hpp"

#include <algorithm>

#include "corpuscoder/error.hpp"

namespace corpuscoder::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

Table parse(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool quoted_field = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    quoted_field = false;
  };
  auto end_record = [&] {
    const bool blank = record.empty() && !field_started;
    end_field();
    if (!blank) {
      const bool comment = records.empty() && !record.empty() && !record[0].empty() && record[0][0] == '#';
      if (!comment) records.push_back(std::move(record));
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) {
          throw Error(ErrorKind::MalformedCsv,
                      "stray quote inside unquoted field at line " + std::to_string(line));
        }
        in_quotes = true;
        field_started = true;
        quoted_field = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        record_line = line;
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        if (quoted_field) {
          throw Error(ErrorKind::MalformedCsv,
                      "characters after closing quote at line " + std::to_string(line));
        }
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorKind::MalformedCsv, "unterminated quoted field starting at line " +
                                             std::to_string(record_line));
  }
  if (field_started || !record.empty()) end_record();

  Table table;
  if (records.empty()) throw Error(ErrorKind::MalformedCsv, "missing header row");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorKind::MalformedCsv,
                  "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  // A lone empty field would read back as a blank line.
  if (fields.size() == 1 && fields[0].empty()) out += "\"\"";
  out.push_back('\n');
}

std::string write(const Table& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

}  // namespace corpuscoder::csv
