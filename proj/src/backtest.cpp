#include "fap/backtest.hpp"

#include <cmath>

#include "fap/errors.hpp"

namespace fap {

std::string to_string(Weighting w) {
  return w == Weighting::equal ? "equal" : "value";
}

BacktestLedger generate_signals(const PredictionSet& predictions, const SignalRule& rule) {
  predictions.validate();
  const Eigen::Index T = predictions.realized.rows();
  const Eigen::Index N = predictions.realized.cols();

  BacktestLedger ledger;
  ledger.months = predictions.months;
  ledger.stocks.resize(N);
  for (Eigen::Index s = 0; s < N; ++s) {
    StockLedger& sl = ledger.stocks[s];
    sl.stock = predictions.stocks[s];
    sl.position.assign(T, 0);
    sl.gross = Eigen::VectorXd::Zero(T);
    sl.cost = Eigen::VectorXd::Zero(T);
    sl.net = Eigen::VectorXd::Zero(T);

    int state = 0;  // start flat
    for (Eigen::Index t = 0; t < T; ++t) {
      sl.position[t] = state;
      if (t + 1 >= T) break;  // no next month to act on
      const double realized_now = predictions.realized(t, s);
      const double predicted_next = predictions.predicted(t + 1, s);
      if (state == 0 && rule.open(realized_now, predicted_next)) {
        state = 1;
        sl.trades.push_back({predictions.months[t + 1], TradeKind::open});
      } else if (state == 1 && rule.close(realized_now, predicted_next)) {
        state = 0;
        sl.trades.push_back({predictions.months[t + 1], TradeKind::close});
      }
    }
    // Terminal close for accounting when still long in the final month.
    if (sl.position[T - 1] == 1) {
      sl.trades.push_back({predictions.months[T - 1], TradeKind::close});
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      sl.gross(t) = sl.position[t] == 1 ? predictions.realized(t, s) : 0.0;
    }
    sl.net = sl.gross;
  }
  return ledger;
}

void apply_costs(BacktestLedger& ledger, double cost_bp, CostMode mode) {
  const double rate = cost_bp / 10000.0;
  for (auto& sl : ledger.stocks) {
    sl.cost.setZero();
    for (const auto& trade : sl.trades) {
      Eigen::Index t = trade.month.index - ledger.months.front().index;
      if (t < 0 || t >= sl.cost.size()) throw AlignmentError("trade month outside ledger range");
      if (mode == CostMode::per_trade) {
        sl.cost(t) += rate;
      } else {
        sl.cost(t) += std::abs(sl.gross(t)) * rate;
      }
    }
    sl.net = sl.gross - sl.cost;
  }
}

namespace {

Eigen::VectorXd aggregate(const std::vector<Eigen::VectorXd>& per_stock,
                          const std::vector<std::string>& names,
                          const std::vector<Month>& months, Weighting weighting,
                          const Panel* marketcap) {
  const Eigen::Index T = static_cast<Eigen::Index>(months.size());
  const Eigen::Index N = static_cast<Eigen::Index>(per_stock.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(T);

  if (weighting == Weighting::equal) {
    for (Eigen::Index t = 0; t < T; ++t) {
      double sum = 0.0;
      for (Eigen::Index s = 0; s < N; ++s) sum += per_stock[s](t);
      out(t) = sum / static_cast<double>(N);
    }
    return out;
  }

  if (!marketcap) throw DataError("value weighting requires a market cap panel");
  std::vector<Eigen::Index> cap_col(N);
  for (Eigen::Index s = 0; s < N; ++s) {
    auto idx = marketcap->column_index(names[s]);
    if (!idx) throw DataError("market cap column missing for stock '" + names[s] + "'");
    cap_col[s] = *idx;
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    const Month prior = months[t].plus(-1);  // prior-month caps avoid look-ahead
    if (!marketcap->span().contains(prior)) {
      throw DataError("market cap panel does not cover " + prior.str());
    }
    Eigen::Index cap_row = marketcap->row_of(prior);
    double total = 0.0;
    for (Eigen::Index s = 0; s < N; ++s) {
      double cap = marketcap->values()(cap_row, cap_col[s]);
      if (Panel::is_missing(cap)) {
        throw DataError("missing market cap for '" + names[s] + "' at " + prior.str());
      }
      total += cap;
    }
    double weighted = 0.0;
    for (Eigen::Index s = 0; s < N; ++s) {
      double cap = marketcap->values()(cap_row, cap_col[s]);
      weighted += cap / total * per_stock[s](t);
    }
    out(t) = weighted;
  }
  return out;
}

}  // namespace

Eigen::VectorXd portfolio_returns(const BacktestLedger& ledger, Weighting weighting,
                                  const Panel* marketcap) {
  std::vector<Eigen::VectorXd> series;
  std::vector<std::string> names;
  series.reserve(ledger.stocks.size());
  for (const auto& sl : ledger.stocks) {
    series.push_back(sl.net);
    names.push_back(sl.stock);
  }
  return aggregate(series, names, ledger.months, weighting, marketcap);
}

Eigen::VectorXd buy_and_hold(const PredictionSet& predictions, Weighting weighting,
                             const Panel* marketcap) {
  predictions.validate();
  std::vector<Eigen::VectorXd> series;
  series.reserve(predictions.stocks.size());
  for (Eigen::Index s = 0; s < predictions.realized.cols(); ++s) {
    series.push_back(predictions.realized.col(s));
  }
  return aggregate(series, predictions.stocks, predictions.months, weighting, marketcap);
}

double annualized_return(const Eigen::VectorXd& series) {
  if (series.size() < 1) throw ShapeError("empty return series");
  double wealth = 1.0;
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    double growth = 1.0 + series(t);
    if (growth <= 0.0) {
      throw WipeoutError("wealth path wiped out by return " + std::to_string(series(t)));
    }
    wealth *= growth;
  }
  return std::pow(wealth, 12.0 / static_cast<double>(series.size())) - 1.0;
}

namespace {

double sample_std(const Eigen::VectorXd& series) {
  if (series.size() < 2) return 0.0;
  double mean = series.mean();
  double ss = (series.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(series.size() - 1));
}

}  // namespace

double sharpe(const Eigen::VectorXd& series) {
  double sd = sample_std(series);
  if (sd <= 0.0) throw UndefinedMetricError("zero standard deviation in Sharpe ratio");
  return series.mean() / sd;
}

double sortino(const Eigen::VectorXd& series) {
  std::vector<double> downside;
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    if (series(t) < 0.0) downside.push_back(series(t));
  }
  if (downside.size() < 2) {
    throw UndefinedMetricError("need at least 2 negative returns for the Sortino ratio");
  }
  Eigen::Map<Eigen::VectorXd> neg(downside.data(), static_cast<Eigen::Index>(downside.size()));
  double sd = sample_std(neg);
  if (sd <= 0.0) throw UndefinedMetricError("zero downside deviation in Sortino ratio");
  return series.mean() / sd;
}

double max_drawdown(const Eigen::VectorXd& series) {
  double wealth = 1.0;
  double peak = 1.0;  // initial wealth counts as a peak candidate
  double mdd = 0.0;
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    double growth = 1.0 + series(t);
    if (growth <= 0.0) {
      throw WipeoutError("wealth path wiped out by return " + std::to_string(series(t)));
    }
    wealth *= growth;
    peak = std::max(peak, wealth);
    mdd = std::max(mdd, (peak - wealth) / peak);
  }
  return mdd;
}

AlphaResult jensens_alpha(const PredictionSet& predictions) {
  predictions.validate();
  const Eigen::Index T = predictions.realized.rows();
  if (T < 2) throw ShapeError("alpha t-stat needs at least 2 months");

  AlphaResult result;
  Eigen::VectorXd per_stock =
      (predictions.realized.colwise().mean() - predictions.predicted.colwise().mean()).transpose();
  result.alpha = per_stock.mean();

  // Pooled monthly series: cross-sectional mean of (r - rhat) per month.
  Eigen::VectorXd monthly = (predictions.realized - predictions.predicted).rowwise().mean();
  double sd = sample_std(monthly);
  if (sd <= 0.0) {
    throw DegenerateError("degenerate alpha series (zero variation), alpha = " +
                          std::to_string(result.alpha));
  }
  result.t_stat = monthly.mean() / (sd / std::sqrt(static_cast<double>(T)));
  return result;
}

}  // namespace fap
