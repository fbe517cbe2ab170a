#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fap {

// Shortest round-trip decimal rendering (std::to_chars); reparsing the text
// recovers the exact double, which keeps serialized artifacts byte-stable.
std::string format_double(double value);

// Strict finite-double parse of a full cell; returns false on any leftover
// characters or non-finite value.
bool parse_double(const std::string& cell, double& out);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated, no quoting (the panel formats never embed commas).
CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string join_csv_row(const std::vector<std::string>& cells);

}  // namespace fap
