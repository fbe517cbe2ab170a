#include "fap/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "fap/errors.hpp"
#include "fap/rng.hpp"

namespace fap {

void PredictionSet::validate() const {
  const auto T = static_cast<Eigen::Index>(months.size());
  const auto N = static_cast<Eigen::Index>(stocks.size());
  if (predicted.rows() != T || realized.rows() != T ||
      predicted.cols() != N || realized.cols() != N || train_mean.size() != N) {
    throw ShapeError("prediction set shapes inconsistent");
  }
  for (std::size_t i = 1; i < months.size(); ++i) {
    if (months[i].index != months[i - 1].index + 1) {
      throw CalendarError("prediction months not contiguous at " + months[i].str());
    }
  }
  if (!predicted.allFinite() || !realized.allFinite()) {
    throw DataError("prediction set contains missing or non-finite values");
  }
}

PredictionSet PredictionSet::truncated(Month cutoff) const {
  Eigen::Index keep = 0;
  while (keep < static_cast<Eigen::Index>(months.size()) && months[keep] <= cutoff) ++keep;
  if (keep == 0) throw CalendarError("cutoff " + cutoff.str() + " precedes the OOS range");
  PredictionSet out;
  out.stocks = stocks;
  out.months.assign(months.begin(), months.begin() + keep);
  out.predicted = predicted.topRows(keep);
  out.realized = realized.topRows(keep);
  out.train_mean = train_mean;
  return out;
}

double oos_r2(const Eigen::VectorXd& realized, const Eigen::VectorXd& predicted,
              double train_mean) {
  if (realized.size() != predicted.size() || realized.size() < 1) {
    throw ShapeError("oos_r2 needs equal-length non-empty vectors");
  }
  double sse = (realized - predicted).array().square().sum();
  double benchmark = (realized.array() - train_mean).square().sum();
  if (benchmark <= 0.0) {
    throw UndefinedMetricError("zero benchmark variation in oos_r2 denominator");
  }
  return 1.0 - sse / benchmark;
}

double mse(const Eigen::VectorXd& realized, const Eigen::VectorXd& predicted) {
  if (realized.size() != predicted.size() || realized.size() < 1) {
    throw ShapeError("mse needs equal-length non-empty vectors");
  }
  return (realized - predicted).array().square().sum() / static_cast<double>(realized.size());
}

DMResult dm_test(const Eigen::MatrixXd& err_m, const Eigen::MatrixXd& err_n, bool hac) {
  if (err_m.rows() != err_n.rows() || err_m.cols() != err_n.cols()) {
    throw ShapeError("DM error matrices must share a shape");
  }
  const Eigen::Index T = err_m.rows();
  if (T < 2) throw ShapeError("DM test needs at least 2 months");

  Eigen::VectorXd d =
      (err_m.array().abs() - err_n.array().abs()).rowwise().mean().matrix();
  DMResult result;
  result.n_months = T;
  result.dbar = d.mean();

  Eigen::ArrayXd centered = d.array() - result.dbar;
  double se;
  if (hac) {
    // Newey-West with Bartlett kernel, lag floor(T^(1/3)).
    const long lag = static_cast<long>(std::floor(std::cbrt(static_cast<double>(T))));
    double lrv = centered.square().sum() / static_cast<double>(T);
    for (long j = 1; j <= lag; ++j) {
      double gamma = 0.0;
      for (Eigen::Index t = j; t < T; ++t) gamma += centered(t) * centered(t - j);
      gamma /= static_cast<double>(T);
      lrv += 2.0 * (1.0 - static_cast<double>(j) / (lag + 1)) * gamma;
    }
    se = std::sqrt(std::max(lrv, 0.0) / static_cast<double>(T));
  } else {
    double sample_var = centered.square().sum() / static_cast<double>(T - 1);
    se = std::sqrt(sample_var / static_cast<double>(T));
  }
  if (se <= 0.0) {
    throw DegenerateDMError("identical error structure, dbar = " + std::to_string(result.dbar));
  }
  result.se = se;
  result.statistic = result.dbar / se;
  return result;
}

double normal_two_sided_p(double statistic) {
  // 2 * (1 - Phi(|z|)) via the complementary error function.
  return std::erfc(std::abs(statistic) / std::sqrt(2.0));
}

double permutation_importance(const BatchPredictor& model, const Eigen::MatrixXd& X_oos,
                              const Eigen::VectorXd& y_oos, Eigen::Index feature_index,
                              std::uint64_t seed, int repeats) {
  if (feature_index < 0 || feature_index >= X_oos.cols()) {
    throw ShapeError("feature index out of range");
  }
  if (repeats < 1) throw ShapeError("repeats must be >= 1");
  if (X_oos.rows() != y_oos.size()) throw ShapeError("X/y row mismatch");

  const double baseline = mse(y_oos, model(X_oos));
  const Eigen::Index n = X_oos.rows();
  double total = 0.0;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(feature_index),
                     static_cast<std::uint64_t>(rep)));
    auto order = shuffled_indices(static_cast<std::size_t>(n), rng);
    Eigen::MatrixXd permuted = X_oos;
    for (Eigen::Index r = 0; r < n; ++r) {
      permuted(r, feature_index) = X_oos(static_cast<Eigen::Index>(order[r]), feature_index);
    }
    total += mse(y_oos, model(permuted)) - baseline;
  }
  return total / repeats;
}

std::vector<RankedFeature> importance_ranking(const std::vector<RankedFeature>& importances,
                                              std::size_t top_k) {
  if (top_k > importances.size()) throw ShapeError("top_k exceeds feature count");
  std::vector<RankedFeature> ranked = importances;
  std::sort(ranked.begin(), ranked.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.name < b.name;
  });
  ranked.resize(top_k);
  return ranked;
}

}  // namespace fap
