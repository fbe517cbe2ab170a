#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fap/month.hpp"

namespace fap {

enum class PanelKind { returns, factors, marketcap };

std::string to_string(PanelKind kind);

// Date-indexed matrix of monthly observations. Missing cells are NaN.
// Immutable after construction; the month grid is gap-free by invariant.
class Panel {
 public:
  Panel(std::vector<Month> dates, std::vector<std::string> columns,
        Eigen::MatrixXd values, PanelKind kind);

  const std::vector<Month>& dates() const { return dates_; }
  const std::vector<std::string>& columns() const { return columns_; }
  const Eigen::MatrixXd& values() const { return values_; }
  PanelKind kind() const { return kind_; }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

  static bool is_missing(double v) { return std::isnan(v); }

  DateRange span() const { return DateRange{dates_.front(), dates_.back()}; }

  // Row position of a month; throws CalendarError when outside the span.
  Eigen::Index row_of(Month m) const;

  std::optional<Eigen::Index> column_index(const std::string& name) const;

  // Rows covering an inclusive range (copy).
  Eigen::MatrixXd slice(const DateRange& range) const;

  // Column subset in the given order, same dates.
  Panel select_columns(const std::vector<Eigen::Index>& keep) const;

 private:
  std::vector<Month> dates_;
  std::vector<std::string> columns_;
  Eigen::MatrixXd values_;
  PanelKind kind_;
};

Panel load_panel(const std::filesystem::path& path, PanelKind kind);
void save_panel(const Panel& panel, const std::filesystem::path& path);

struct UniverseFilterSpec {
  double max_train_missing_frac = 0.5;
  bool test_missing_allowed = false;
  double min_factor_train_avail_frac = 0.6;
};

// Keeps stocks fully observed in the test range whose training missing
// fraction stays below the cap. Column order preserved.
Panel filter_universe(const Panel& returns, const DateRange& train,
                      const DateRange& test, const UniverseFilterSpec& spec);

// Keeps factors with availability >= min_factor_train_avail_frac over train.
Panel filter_factors(const Panel& factors, const DateRange& train,
                     const UniverseFilterSpec& spec);

struct StandardizeStats {
  std::vector<double> mean;  // fit-range mean (also the imputation value)
  std::vector<double> std;   // fit-range sample std after imputation
};

// Fills missing cells with the fit-range column mean, then maps every column
// through (x - mean) / std with statistics taken from fit_range only, so the
// same transform applies to validation/test rows without look-ahead.
std::pair<Panel, StandardizeStats> impute_and_standardize(const Panel& panel,
                                                          const DateRange& fit_range);

}  // namespace fap
