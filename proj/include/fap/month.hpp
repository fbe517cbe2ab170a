#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

#include "fap/errors.hpp"

namespace fap {

// Calendar month on a linear index (year*12 + month-1), formatted "YYYY-MM".
struct Month {
  int index = 0;

  static std::optional<Month> try_parse(std::string_view text);
  static Month parse(std::string_view text);  // throws ParseError

  int year() const { return index / 12; }
  int month_of_year() const { return index % 12 + 1; }
  Month plus(int months) const { return Month{index + months}; }
  std::string str() const;

  auto operator<=>(const Month&) const = default;
};

inline int months_between(Month from, Month to) { return to.index - from.index; }

// Inclusive [start, end] month range.
struct DateRange {
  Month start;
  Month end;

  int length() const { return end.index - start.index + 1; }
  bool contains(Month m) const { return start <= m && m <= end; }
  bool contains(const DateRange& other) const {
    return start <= other.start && other.end <= end;
  }
  bool overlaps(const DateRange& other) const {
    return start <= other.end && other.start <= end;
  }

  auto operator<=>(const DateRange&) const = default;
};

inline DateRange make_range(Month start, Month end) {
  if (end < start) throw CalendarError("date range end " + end.str() + " precedes start " + start.str());
  return DateRange{start, end};
}

}  // namespace fap
