#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>

namespace fap {

enum class LinearKind { ols, pls, pcr };

std::string to_string(LinearKind kind);

// Shared prediction frame: yhat = intercept + X * coefficients. PLS/PCR keep
// their latent projection (components + feature means) for inspection, but
// the fitted map is folded into feature-space coefficients so prediction is
// uniform across the three estimators.
struct LinearModel {
  LinearKind kind = LinearKind::ols;
  Eigen::VectorXd coefficients;  // over the original feature space
  double intercept = 0.0;

  struct Projection {
    Eigen::MatrixXd components;    // P x k
    Eigen::VectorXd feature_means; // P
  };
  std::optional<Projection> projection;  // present iff kind is pls/pcr
  double variance_threshold = 0.95;
  int n_components = 0;

  bool rank_deficient = false;  // OLS solved by minimum-norm least squares
  bool flagged = false;         // PLS stopped before reaching the threshold
};

// Least squares with intercept; rank-deficient designs fall back to the
// minimum-norm solution and set rank_deficient.
LinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Principal component regression: smallest component count whose cumulative
// explained variance reaches the threshold, then OLS on the scores.
LinearModel fit_pcr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double variance_threshold = 0.95);

// Univariate-response PLS with X deflation; component count is the smallest
// k whose captured X-variance reaches the threshold.
LinearModel fit_pls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double variance_threshold = 0.95);

Eigen::VectorXd predict_linear(const LinearModel& model, const Eigen::MatrixXd& X);

void save_linear(const LinearModel& model, const std::filesystem::path& path,
                 const std::string& config_hash);
LinearModel load_linear(const std::filesystem::path& path,
                        const std::string& expected_config_hash = "");

}  // namespace fap
