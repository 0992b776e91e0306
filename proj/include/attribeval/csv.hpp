#pragma once

// Minimal RFC 4180 reader/writer. Fields containing a comma, quote or line
// break are quoted; quotes are doubled.

#include <string>
#include <string_view>
#include <vector>

#include "attribeval/error.hpp"

namespace attribeval::csv {

using Row = std::vector<std::string>;

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += escape(row[i]);
  }
  out += '\n';
  return out;
}

inline std::string format(const std::vector<Row>& rows) {
  std::string out;
  for (const auto& r : rows) out += format_row(r);
  return out;
}

inline std::vector<Row> parse(std::string_view data) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  if (data.starts_with("\xEF\xBB\xBF")) i = 3;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < data.size(); ++i) {
    char ch = data[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += ch;
      field_started = true;
    }
  }
  if (quoted) throw UsageError("CSV ends inside a quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

}  // namespace attribeval::csv
