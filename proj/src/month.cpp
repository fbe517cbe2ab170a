#include "fap/month.hpp"

#include <cctype>
#include <cstdio>

namespace fap {

std::optional<Month> Month::try_parse(std::string_view text) {
  // Strict "YYYY-MM": four digits, dash, two digits.
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  for (int i : {0, 1, 2, 3, 5, 6}) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
  }
  int year = (text[0] - '0') * 1000 + (text[1] - '0') * 100 + (text[2] - '0') * 10 + (text[3] - '0');
  int mon = (text[5] - '0') * 10 + (text[6] - '0');
  if (mon < 1 || mon > 12) return std::nullopt;
  return Month{year * 12 + mon - 1};
}

Month Month::parse(std::string_view text) {
  auto m = try_parse(text);
  if (!m) throw ParseError("malformed month '" + std::string(text) + "', expected YYYY-MM");
  return *m;
}

std::string Month::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month_of_year());
  return buf;
}

}  // namespace fap
