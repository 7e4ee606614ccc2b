// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace trajlab {

/// Shortest round-trip representation ("%.17g"); "inf"/"-inf"/"nan" otherwise.
std::string format_double(double value);

// Minimal RFC 4180 writer. Fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);

  CsvWriter& field(std::string_view value);
  CsvWriter& field(double value);
  CsvWriter& field(std::uint64_t value);
  CsvWriter& field(std::int64_t value);
  CsvWriter& field(int value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(bool value) { return field(std::string_view(value ? "true" : "false")); }
  void end_row();

 private:
  void separator();

  std::ofstream out_;
  std::size_t columns_;
  std::size_t current_ = 0;
};

/// Parses a CSV file with a header row. Quoted fields are supported.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace trajlab
