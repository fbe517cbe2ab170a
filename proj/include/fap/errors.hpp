#pragma once

#include <stdexcept>
#include <string>

namespace fap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input / schema problems
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long row = -1, const std::string& column = "")
      : Error(format(msg, row, column)), row_(row), column_(column) {}
  long row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  static std::string format(const std::string& msg, long row, const std::string& column) {
    std::string out = msg;
    if (row >= 0) out += " (row " + std::to_string(row) + ")";
    if (!column.empty()) out += " (column " + column + ")";
    return out;
  }
  long row_;
  std::string column_;
};

class SchemaError : public Error { public: using Error::Error; };
class CalendarError : public Error { public: using Error::Error; };
class EmptyUniverseError : public Error { public: using Error::Error; };
class EmptyFactorSetError : public Error { public: using Error::Error; };
class DegenerateColumnError : public Error { public: using Error::Error; };
class PlanError : public Error { public: using Error::Error; };

// Model / numeric problems
class ArchitectureError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class DegenerateInputError : public Error { public: using Error::Error; };

// Metric / evaluation problems
class UndefinedMetricError : public Error { public: using Error::Error; };
class DegenerateDMError : public Error { public: using Error::Error; };
class DegenerateError : public Error { public: using Error::Error; };
class OracleError : public Error { public: using Error::Error; };

// Backtest / pipeline problems
class AlignmentError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class WipeoutError : public Error { public: using Error::Error; };
class StaleArtifactError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace fap
