#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fap/month.hpp"

namespace fap {

// Out-of-sample predictions aligned to realized returns: rows are contiguous
// OOS months, columns are stocks. train_mean holds each stock's mean excess
// return over the initial training window (the OOS R^2 benchmark predictor).
struct PredictionSet {
  std::vector<std::string> stocks;
  std::vector<Month> months;
  Eigen::MatrixXd predicted;  // T x N
  Eigen::MatrixXd realized;   // T x N
  Eigen::VectorXd train_mean; // N

  void validate() const;
  // Rows restricted to months <= cutoff (columns unchanged).
  PredictionSet truncated(Month cutoff) const;
};

// 1 - sum((r - rhat)^2) / sum((r - train_mean)^2)
double oos_r2(const Eigen::VectorXd& realized, const Eigen::VectorXd& predicted,
              double train_mean);

double mse(const Eigen::VectorXd& realized, const Eigen::VectorXd& predicted);

struct DMResult {
  double statistic = 0.0;
  double dbar = 0.0;       // time mean of the monthly cross-sectional differences
  double se = 0.0;         // std of the monthly differences over sqrt(T)
  long n_months = 0;
  std::string convention = "m minus n";  // positive => model m underperforms n
};

// Diebold-Mariano comparison of two models' absolute forecast errors,
// cross-sectionally averaged per month, then tested over time. Inputs are
// T x h error matrices; absolute values are taken internally. When hac is
// set, the standard error uses a Newey-West (Bartlett) long-run variance.
DMResult dm_test(const Eigen::MatrixXd& err_m, const Eigen::MatrixXd& err_n,
                 bool hac = false);

double normal_two_sided_p(double statistic);

using BatchPredictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

// Mean over `repeats` seeded shuffles of (permuted-column MSE - baseline MSE).
double permutation_importance(const BatchPredictor& model, const Eigen::MatrixXd& X_oos,
                              const Eigen::VectorXd& y_oos, Eigen::Index feature_index,
                              std::uint64_t seed, int repeats);

struct RankedFeature {
  std::string name;
  double importance = 0.0;
};

// Descending importance, ties broken by ascending feature name.
std::vector<RankedFeature> importance_ranking(const std::vector<RankedFeature>& importances,
                                              std::size_t top_k);

}  // namespace fap
