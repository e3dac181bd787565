#pragma once

// Minimal RFC 4180 reader/writer: fields containing separators, quotes or
// line breaks are quoted, embedded quotes doubled.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fmtbias/error.hpp"

namespace fmtbias::csv {

using Row = std::vector<std::string>;

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
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
  return out;
}

inline void write_row(std::ostream& os, const Row& row) { os << format_row(row) << '\n'; }

inline std::vector<Row> parse(std::string_view data) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
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
  while (i < data.size()) {
    char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      end_row();
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw Error(Errc::Schema, "unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::vector<Row> read(std::istream& is) {
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse(data);
}

}  // namespace fmtbias::csv
