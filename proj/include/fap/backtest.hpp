#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fap/evaluation.hpp"
#include "fap/month.hpp"
#include "fap/panel.hpp"

namespace fap {

// Long-only sign-agreement rule: open when the latest realized return and the
// next month's forecast are both positive, close when both are negative, with
// the transition taking effect the following month. sign(0) counts as
// non-positive on both sides.
struct SignalRule {
  bool open(double realized_now, double predicted_next) const {
    return realized_now > 0.0 && predicted_next > 0.0;
  }
  bool close(double realized_now, double predicted_next) const {
    return realized_now < 0.0 && predicted_next < 0.0;
  }
};

enum class TradeKind { open, close };

struct TradeEvent {
  Month month;
  TradeKind kind;
};

struct StockLedger {
  std::string stock;
  std::vector<int> position;   // 0 flat, 1 long; one entry per OOS month
  std::vector<TradeEvent> trades;
  Eigen::VectorXd gross;  // per-month strategy return before costs
  Eigen::VectorXd cost;
  Eigen::VectorXd net;
};

struct BacktestLedger {
  std::vector<Month> months;
  std::vector<StockLedger> stocks;
};

enum class Weighting { equal, value };
enum class CostMode { per_trade, literal };

std::string to_string(Weighting w);

// Positions from the sign-agreement rule; a position still open in the final
// month is closed there for accounting. Gross returns are filled from the
// realized matrix (flat months contribute 0).
BacktestLedger generate_signals(const PredictionSet& predictions, const SignalRule& rule);

// Charges cost_bp basis points in every month where a trade executes
// (per_trade mode) or cost_bp of that month's return (literal mode).
void apply_costs(BacktestLedger& ledger, double cost_bp,
                 CostMode mode = CostMode::per_trade);

// Monthly portfolio series from per-stock net returns. Value weighting uses
// prior-month market caps normalized across all ledger stocks.
Eigen::VectorXd portfolio_returns(const BacktestLedger& ledger, Weighting weighting,
                                  const Panel* marketcap = nullptr);

// Always-long, cost-free benchmark over the realized OOS returns.
Eigen::VectorXd buy_and_hold(const PredictionSet& predictions, Weighting weighting,
                             const Panel* marketcap = nullptr);

// (prod(1 + r))^(12/n) - 1
double annualized_return(const Eigen::VectorXd& series);

// Monthly-scale mean/std of excess returns (sample std).
double sharpe(const Eigen::VectorXd& series);

// Mean over the sample std of the negative-return subsample.
double sortino(const Eigen::VectorXd& series);

// Largest peak-to-trough fraction of the cumulative wealth path, with the
// unit starting wealth counted as the first peak candidate.
double max_drawdown(const Eigen::VectorXd& series);

struct AlphaResult {
  double alpha = 0.0;   // mean over stocks of mean(r) - mean(rhat)
  double t_stat = 0.0;  // one-sample t of the monthly cross-sectional mean difference
};

AlphaResult jensens_alpha(const PredictionSet& predictions);

struct MetricReport {
  std::string model;
  std::string weighting;
  std::string period;
  double annual_return = 0.0;
  double std_dev = 0.0;
  double sharpe = 0.0;
  double sortino = 0.0;
  double mdd = 0.0;
  bool has_alpha = false;
  double alpha = 0.0;
  double alpha_t = 0.0;
  bool sortino_defined = true;
};

}  // namespace fap
