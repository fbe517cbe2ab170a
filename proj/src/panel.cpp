#include "fap/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "fap/csv.hpp"
#include "fap/errors.hpp"

namespace fap {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(PanelKind kind) {
  switch (kind) {
    case PanelKind::returns: return "returns";
    case PanelKind::factors: return "factors";
    case PanelKind::marketcap: return "marketcap";
  }
  return "?";
}

Panel::Panel(std::vector<Month> dates, std::vector<std::string> columns,
             Eigen::MatrixXd values, PanelKind kind)
    : dates_(std::move(dates)), columns_(std::move(columns)),
      values_(std::move(values)), kind_(kind) {
  if (dates_.empty()) throw SchemaError("panel has no rows");
  if (columns_.empty()) throw SchemaError("panel has no columns");
  if (values_.rows() != static_cast<Eigen::Index>(dates_.size()) ||
      values_.cols() != static_cast<Eigen::Index>(columns_.size())) {
    throw ShapeError("panel value matrix does not match dates x columns");
  }
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    int gap = dates_[i].index - dates_[i - 1].index;
    if (gap == 0) throw CalendarError("duplicate month " + dates_[i].str());
    if (gap < 0) throw CalendarError("months out of order at " + dates_[i].str());
    if (gap > 1) {
      throw CalendarError("month gap between " + dates_[i - 1].str() + " and " + dates_[i].str());
    }
  }
  std::set<std::string> seen;
  for (const auto& name : columns_) {
    if (name.empty()) throw SchemaError("empty column name");
    if (!seen.insert(name).second) throw SchemaError("duplicate column '" + name + "'");
  }
  if (kind_ == PanelKind::marketcap) {
    for (Eigen::Index r = 0; r < values_.rows(); ++r) {
      for (Eigen::Index c = 0; c < values_.cols(); ++c) {
        double v = values_(r, c);
        if (!is_missing(v) && v <= 0.0) {
          throw SchemaError("non-positive market cap for '" + columns_[c] +
                            "' at " + dates_[r].str());
        }
      }
    }
  }
}

Eigen::Index Panel::row_of(Month m) const {
  if (m < dates_.front() || dates_.back() < m) {
    throw CalendarError("month " + m.str() + " outside panel span " +
                        dates_.front().str() + ".." + dates_.back().str());
  }
  return m.index - dates_.front().index;
}

std::optional<Eigen::Index> Panel::column_index(const std::string& name) const {
  auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - columns_.begin());
}

Eigen::MatrixXd Panel::slice(const DateRange& range) const {
  Eigen::Index first = row_of(range.start);
  Eigen::Index last = row_of(range.end);
  return values_.middleRows(first, last - first + 1);
}

Panel Panel::select_columns(const std::vector<Eigen::Index>& keep) const {
  std::vector<std::string> names;
  names.reserve(keep.size());
  Eigen::MatrixXd vals(values_.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    names.push_back(columns_[keep[j]]);
    vals.col(static_cast<Eigen::Index>(j)) = values_.col(keep[j]);
  }
  return Panel(dates_, std::move(names), std::move(vals), kind_);
}

Panel load_panel(const std::filesystem::path& path, PanelKind kind) {
  CsvTable table = read_csv(path);
  const std::string where = path.string();
  if (table.header.empty() || table.header[0] != "date") {
    throw SchemaError(where + ": first header cell must be 'date'");
  }
  if (table.header.size() < 2) throw SchemaError(where + ": no data columns");
  std::vector<std::string> columns(table.header.begin() + 1, table.header.end());
  {
    std::set<std::string> seen;
    for (const auto& name : columns) {
      if (name.empty()) throw SchemaError(where + ": empty column name");
      if (!seen.insert(name).second) {
        throw SchemaError(where + ": duplicate column '" + name + "'");
      }
    }
  }

  struct Row {
    Month month;
    std::vector<double> cells;
  };
  std::vector<Row> parsed;
  parsed.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const long file_row = static_cast<long>(r) + 2;  // 1-based, after header
    if (cells.size() != table.header.size()) {
      throw ParseError(where + ": wrong cell count", file_row);
    }
    auto month = Month::try_parse(cells[0]);
    if (!month) throw ParseError(where + ": malformed date '" + cells[0] + "'", file_row);
    Row row;
    row.month = *month;
    row.cells.reserve(columns.size());
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.cells.push_back(kNaN);
        continue;
      }
      double v;
      if (!parse_double(cells[c], v)) {
        throw ParseError(where + ": non-numeric cell '" + cells[c] + "'",
                         file_row, columns[c - 1]);
      }
      row.cells.push_back(v);
    }
    parsed.push_back(std::move(row));
  }
  if (parsed.empty()) throw SchemaError(where + ": no data rows");

  std::sort(parsed.begin(), parsed.end(),
            [](const Row& a, const Row& b) { return a.month < b.month; });
  for (std::size_t i = 1; i < parsed.size(); ++i) {
    int gap = parsed[i].month.index - parsed[i - 1].month.index;
    if (gap == 0) throw CalendarError(where + ": duplicate month " + parsed[i].month.str());
    if (gap > 1) {
      throw CalendarError(where + ": month gap between " + parsed[i - 1].month.str() +
                          " and " + parsed[i].month.str());
    }
  }

  std::vector<Month> dates;
  dates.reserve(parsed.size());
  Eigen::MatrixXd values(static_cast<Eigen::Index>(parsed.size()),
                         static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < parsed.size(); ++r) {
    dates.push_back(parsed[r].month);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parsed[r].cells[c];
    }
  }
  try {
    return Panel(std::move(dates), std::move(columns), std::move(values), kind);
  } catch (const Error& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

void save_panel(const Panel& panel, const std::filesystem::path& path) {
  CsvTable table;
  table.header.push_back("date");
  for (const auto& name : panel.columns()) table.header.push_back(name);
  table.rows.reserve(panel.dates().size());
  for (Eigen::Index r = 0; r < panel.rows(); ++r) {
    std::vector<std::string> row;
    row.reserve(panel.cols() + 1);
    row.push_back(panel.dates()[r].str());
    for (Eigen::Index c = 0; c < panel.cols(); ++c) {
      double v = panel.values()(r, c);
      row.push_back(Panel::is_missing(v) ? std::string() : format_double(v));
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

namespace {

void check_range_in_span(const Panel& panel, const DateRange& range, const char* what) {
  if (!panel.span().contains(range)) {
    throw CalendarError(std::string(what) + " range " + range.start.str() + ".." +
                        range.end.str() + " outside panel span");
  }
}

}  // namespace

Panel filter_universe(const Panel& returns, const DateRange& train,
                      const DateRange& test, const UniverseFilterSpec& spec) {
  check_range_in_span(returns, train, "train");
  check_range_in_span(returns, test, "test");
  if (train.overlaps(test)) throw CalendarError("train and test ranges overlap");
  if (spec.max_train_missing_frac < 0.0 || spec.max_train_missing_frac > 1.0) {
    throw ConfigError("max_train_missing_frac must lie in [0, 1]");
  }

  Eigen::MatrixXd train_rows = returns.slice(train);
  Eigen::MatrixXd test_rows = returns.slice(test);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < returns.cols(); ++c) {
    Eigen::Index train_missing = 0;
    for (Eigen::Index r = 0; r < train_rows.rows(); ++r) {
      if (Panel::is_missing(train_rows(r, c))) ++train_missing;
    }
    bool test_ok = true;
    if (!spec.test_missing_allowed) {
      for (Eigen::Index r = 0; r < test_rows.rows(); ++r) {
        if (Panel::is_missing(test_rows(r, c))) {
          test_ok = false;
          break;
        }
      }
    }
    double missing_frac = static_cast<double>(train_missing) / train_rows.rows();
    if (test_ok && missing_frac < spec.max_train_missing_frac) keep.push_back(c);
  }
  if (keep.empty()) throw EmptyUniverseError("no stock passes the availability filters");
  return returns.select_columns(keep);
}

Panel filter_factors(const Panel& factors, const DateRange& train,
                     const UniverseFilterSpec& spec) {
  check_range_in_span(factors, train, "train");
  if (spec.min_factor_train_avail_frac < 0.0 || spec.min_factor_train_avail_frac > 1.0) {
    throw ConfigError("min_factor_train_avail_frac must lie in [0, 1]");
  }
  Eigen::MatrixXd train_rows = factors.slice(train);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < factors.cols(); ++c) {
    Eigen::Index present = 0;
    for (Eigen::Index r = 0; r < train_rows.rows(); ++r) {
      if (!Panel::is_missing(train_rows(r, c))) ++present;
    }
    double avail = static_cast<double>(present) / train_rows.rows();
    if (avail >= spec.min_factor_train_avail_frac) keep.push_back(c);
  }
  if (keep.empty()) throw EmptyFactorSetError("no factor passes the availability filter");
  return factors.select_columns(keep);
}

std::pair<Panel, StandardizeStats> impute_and_standardize(const Panel& panel,
                                                          const DateRange& fit_range) {
  check_range_in_span(panel, fit_range, "fit");
  const Eigen::Index fit_first = panel.row_of(fit_range.start);
  const Eigen::Index fit_count = fit_range.length();

  StandardizeStats stats;
  stats.mean.resize(panel.cols());
  stats.std.resize(panel.cols());
  Eigen::MatrixXd out = panel.values();

  for (Eigen::Index c = 0; c < panel.cols(); ++c) {
    double sum = 0.0;
    Eigen::Index observed = 0;
    for (Eigen::Index r = fit_first; r < fit_first + fit_count; ++r) {
      double v = out(r, c);
      if (!Panel::is_missing(v)) {
        sum += v;
        ++observed;
      }
    }
    if (observed == 0) {
      throw DegenerateColumnError("column '" + panel.columns()[c] +
                                  "' has no observed value in the fit range");
    }
    const double mean = sum / static_cast<double>(observed);

    // Sample std over the fit range after imputation, so the standardized
    // fit slice comes out with mean 0 and sample std exactly 1.
    double ss = 0.0;
    for (Eigen::Index r = fit_first; r < fit_first + fit_count; ++r) {
      double v = out(r, c);
      double filled = Panel::is_missing(v) ? mean : v;
      ss += (filled - mean) * (filled - mean);
    }
    if (fit_count < 2 || ss == 0.0) {
      throw DegenerateColumnError("column '" + panel.columns()[c] +
                                  "' is constant over the fit range");
    }
    const double sd = std::sqrt(ss / static_cast<double>(fit_count - 1));

    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      double v = out(r, c);
      double filled = Panel::is_missing(v) ? mean : v;
      out(r, c) = (filled - mean) / sd;
    }
    stats.mean[c] = mean;
    stats.std[c] = sd;
  }
  return {Panel(panel.dates(), panel.columns(), std::move(out), panel.kind()), stats};
}

}  // namespace fap
