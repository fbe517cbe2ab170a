#include "fap/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "fap/errors.hpp"

namespace fap {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last) return false;
  return std::isfinite(out);
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      table.header = split_line(line);
      first = false;
    } else {
      table.rows.push_back(split_line(line));
    }
  }
  if (first) throw ParseError("empty file " + path.string());
  return table;
}

std::string join_csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);  // \n line endings on all platforms
  if (!out) throw DataError("cannot write file " + path.string());
  out << join_csv_row(table.header) << '\n';
  for (const auto& row : table.rows) out << join_csv_row(row) << '\n';
}

}  // namespace fap
