#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fap/month.hpp"
#include "fap/panel.hpp"

namespace fap {

enum class Nonlinearity { none, relu_mixture };

// Desk-scale surrogate panel with known ground truth. Returns are excess
// returns; the risk-free series is added back when the panels are written in
// the ingest format.
struct SyntheticSpec {
  int n_stocks = 20;
  int n_factors = 10;
  int n_months = 300;
  Eigen::MatrixXd true_beta;  // stocks x factors; generated from seed when empty
  double noise_std = 0.02;
  Nonlinearity nonlinearity = Nonlinearity::none;
  double missing_frac = 0.0;
  std::uint64_t seed = 1;
  Month start = Month{1990 * 12};  // 1990-01
  int protected_tail_months = 75;  // no missingness injected in the last K months
  double riskfree_rate = 0.002;
};

struct SyntheticGroundTruth {
  Eigen::MatrixXd beta;          // stocks x factors
  double noise_std = 0.0;
  double population_r2 = 0.0;    // average over stocks; exact for Nonlinearity::none
  Eigen::MatrixXd mix_directions;  // factors x K (relu_mixture only)
  Eigen::MatrixXd mix_coeffs;      // stocks x K
  double mix_scale = 0.0;
};

struct SyntheticData {
  Panel factors;
  Panel returns;    // excess returns
  Panel marketcap;
  Panel riskfree;   // single column "rf"
  SyntheticGroundTruth truth;
};

SyntheticData generate(const SyntheticSpec& spec);

// Writes returns/factors/marketcap/riskfree CSVs in the ingest format with
// the risk-free rate added back onto the excess returns.
void write_synthetic_csvs(const SyntheticData& data, const std::filesystem::path& dir);

// Independent normal-equations solver (LU on X'X), no intercept; kept apart
// from fit_ols for cross-checking.
Eigen::VectorXd oracle_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Straight-line reimplementations of the evaluation and backtest metrics,
// used only for dual-route checks in tests.
namespace oracle {

double oos_r2(const std::vector<double>& realized, const std::vector<double>& predicted,
              double train_mean);
double mse(const std::vector<double>& realized, const std::vector<double>& predicted);
double dm_statistic(const std::vector<std::vector<double>>& err_m,
                    const std::vector<std::vector<double>>& err_n);
double annualized_return(const std::vector<double>& series);
double sharpe(const std::vector<double>& series);
double sortino(const std::vector<double>& series);
double max_drawdown(const std::vector<double>& series);
double alpha(const std::vector<std::vector<double>>& realized,
             const std::vector<std::vector<double>>& predicted);

}  // namespace oracle

}  // namespace fap
