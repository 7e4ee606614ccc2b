// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/csv.hpp"

#include <cmath>
#include <cstdio>

#include "trajlab/error.hpp"

namespace trajlab {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (auto h : header) field(h);
  end_row();
}

void CsvWriter::separator() {
  if (current_ > 0) out_ << ',';
  ++current_;
}

CsvWriter& CsvWriter::field(std::string_view value) {
  separator();
  if (value.find_first_of(",\"\n\r") == std::string_view::npos) {
    out_ << value;
    return *this;
  }
  out_ << '"';
  for (char c : value) {
    if (c == '"') out_ << '"';
    out_ << c;
  }
  out_ << '"';
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::field(std::uint64_t value) { return field(std::string_view(std::to_string(value))); }

CsvWriter& CsvWriter::field(std::int64_t value) { return field(std::string_view(std::to_string(value))); }

void CsvWriter::end_row() {
  if (current_ != columns_) {
    throw Error(ErrorCode::InvalidArgument,
                "csv row has " + std::to_string(current_) + " fields, header has " + std::to_string(columns_));
  }
  out_ << '\n';
  current_ = 0;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get();
      row.push_back(std::move(field));
      field.clear();
      if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, path.string() + ": unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace trajlab
