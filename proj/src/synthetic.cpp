#include "fap/synthetic.hpp"

#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "fap/errors.hpp"
#include "fap/rng.hpp"

namespace fap {

namespace {

std::vector<Month> month_grid(Month start, int n) {
  std::vector<Month> months(n);
  for (int i = 0; i < n; ++i) months[i] = start.plus(i);
  return months;
}

std::vector<std::string> numbered(const char* prefix, int n) {
  std::vector<std::string> names(n);
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, i + 1);
    names[i] = buf;
  }
  return names;
}

}  // namespace

SyntheticData generate(const SyntheticSpec& spec) {
  if (spec.n_stocks < 1 || spec.n_factors < 1 || spec.n_months < 1) {
    throw ShapeError("synthetic dimensions must be >= 1");
  }
  if (spec.missing_frac < 0.0 || spec.missing_frac >= 1.0) {
    throw ShapeError("missing fraction must lie in [0, 1)");
  }

  const int T = spec.n_months;
  const int N = spec.n_stocks;
  const int P = spec.n_factors;

  Rng factor_rng(mix_seed(spec.seed, 1));
  Rng beta_rng(mix_seed(spec.seed, 2));
  Rng noise_rng(mix_seed(spec.seed, 3));
  Rng cap_rng(mix_seed(spec.seed, 4));
  Rng miss_rng(mix_seed(spec.seed, 5));
  Rng mix_rng(mix_seed(spec.seed, 6));

  Eigen::MatrixXd factors(T, P);
  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < P; ++p) factors(t, p) = factor_rng.normal();
  }

  SyntheticGroundTruth truth;
  if (spec.true_beta.size() > 0) {
    if (spec.true_beta.rows() != N || spec.true_beta.cols() != P) {
      throw ShapeError("true_beta must be stocks x factors");
    }
    truth.beta = spec.true_beta;
  } else {
    truth.beta.resize(N, P);
    for (int s = 0; s < N; ++s) {
      for (int p = 0; p < P; ++p) truth.beta(s, p) = beta_rng.normal(0.0, 0.01);
    }
  }
  truth.noise_std = spec.noise_std;

  Eigen::MatrixXd returns = factors * truth.beta.transpose();

  if (spec.nonlinearity == Nonlinearity::relu_mixture) {
    // Two centered ReLU ridge functions of random unit directions; a linear
    // fit captures only part of a ReLU ridge, so a substantial nonlinear
    // residual survives any linear estimator.
    const int K = 2;
    truth.mix_directions.resize(P, K);
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd u(P);
      for (int p = 0; p < P; ++p) u(p) = mix_rng.normal();
      truth.mix_directions.col(k) = u / u.norm();
    }
    truth.mix_coeffs.resize(N, K);
    for (int s = 0; s < N; ++s) {
      for (int k = 0; k < K; ++k) {
        truth.mix_coeffs(s, k) = mix_rng.uniform() < 0.5 ? -1.0 : 1.0;
      }
    }
    // Scale the mixture so its marginal std is about three times the linear
    // signal, keeping the nonlinear share of variance dominant.
    double avg_beta_norm = truth.beta.rowwise().norm().mean();
    truth.mix_scale = 3.0 * std::max(avg_beta_norm, 1e-6);
    const double relu_mean = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const double relu_std = std::sqrt(0.5 - 1.0 / (2.0 * std::numbers::pi));
    Eigen::MatrixXd ridge = factors * truth.mix_directions;  // T x K
    Eigen::MatrixXd centered =
        ((ridge.cwiseMax(0.0).array() - relu_mean) / (relu_std * std::sqrt(static_cast<double>(K))))
            .matrix();
    returns += truth.mix_scale * (centered * truth.mix_coeffs.transpose());
  }

  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < N; ++s) returns(t, s) += noise_rng.normal(0.0, spec.noise_std);
  }

  if (spec.nonlinearity == Nonlinearity::none) {
    double r2_sum = 0.0;
    for (int s = 0; s < N; ++s) {
      double signal_var = truth.beta.row(s).squaredNorm();
      r2_sum += signal_var / (signal_var + spec.noise_std * spec.noise_std);
    }
    truth.population_r2 = r2_sum / N;
  }

  // Market caps: lognormal levels following a slow random walk.
  Eigen::MatrixXd caps(T, N);
  for (int s = 0; s < N; ++s) {
    double log_cap = std::log(1e9) + cap_rng.normal(0.0, 1.0);
    for (int t = 0; t < T; ++t) {
      caps(t, s) = std::exp(log_cap);
      log_cap += cap_rng.normal(0.0, 0.02);
    }
  }

  // Missingness outside the protected tail.
  const int protected_from = std::max(0, T - spec.protected_tail_months);
  if (spec.missing_frac > 0.0) {
    for (int t = 0; t < protected_from; ++t) {
      for (int s = 0; s < N; ++s) {
        if (miss_rng.uniform() < spec.missing_frac) {
          returns(t, s) = std::numeric_limits<double>::quiet_NaN();
        }
      }
      for (int p = 0; p < P; ++p) {
        if (miss_rng.uniform() < spec.missing_frac) {
          factors(t, p) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }

  auto months = month_grid(spec.start, T);
  Eigen::MatrixXd rf = Eigen::MatrixXd::Constant(T, 1, spec.riskfree_rate);

  SyntheticData data{
      Panel(months, numbered("F", P), std::move(factors), PanelKind::factors),
      Panel(months, numbered("S", N), std::move(returns), PanelKind::returns),
      Panel(months, numbered("S", N), std::move(caps), PanelKind::marketcap),
      Panel(months, {"rf"}, std::move(rf), PanelKind::factors),
      std::move(truth)};
  return data;
}

void write_synthetic_csvs(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Eigen::MatrixXd raw = data.returns.values();
  for (Eigen::Index t = 0; t < raw.rows(); ++t) {
    double rf = data.riskfree.values()(t, 0);
    for (Eigen::Index s = 0; s < raw.cols(); ++s) {
      if (!Panel::is_missing(raw(t, s))) raw(t, s) += rf;
    }
  }
  Panel total_returns(data.returns.dates(), data.returns.columns(), std::move(raw),
                      PanelKind::returns);
  save_panel(total_returns, dir / "returns.csv");
  save_panel(data.factors, dir / "factors.csv");
  save_panel(data.marketcap, dir / "marketcap.csv");
  save_panel(data.riskfree, dir / "riskfree.csv");
}

Eigen::VectorXd oracle_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ShapeError("X/y row mismatch");
  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (!lu.isInvertible()) throw OracleError("normal equations are singular");
  return lu.solve(X.transpose() * y);
}

namespace oracle {

namespace {

double naive_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double naive_sample_std(const std::vector<double>& xs) {
  double mean = naive_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

double oos_r2(const std::vector<double>& realized, const std::vector<double>& predicted,
              double train_mean) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < realized.size(); ++i) {
    num += (realized[i] - predicted[i]) * (realized[i] - predicted[i]);
    den += (realized[i] - train_mean) * (realized[i] - train_mean);
  }
  return 1.0 - num / den;
}

double mse(const std::vector<double>& realized, const std::vector<double>& predicted) {
  double sum = 0.0;
  for (std::size_t i = 0; i < realized.size(); ++i) {
    sum += (realized[i] - predicted[i]) * (realized[i] - predicted[i]);
  }
  return sum / static_cast<double>(realized.size());
}

double dm_statistic(const std::vector<std::vector<double>>& err_m,
                    const std::vector<std::vector<double>>& err_n) {
  std::vector<double> d;
  for (std::size_t t = 0; t < err_m.size(); ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < err_m[t].size(); ++i) {
      sum += std::abs(err_m[t][i]) - std::abs(err_n[t][i]);
    }
    d.push_back(sum / static_cast<double>(err_m[t].size()));
  }
  double dbar = naive_mean(d);
  double se = naive_sample_std(d) / std::sqrt(static_cast<double>(d.size()));
  return dbar / se;
}

double annualized_return(const std::vector<double>& series) {
  double wealth = 1.0;
  for (double r : series) wealth *= 1.0 + r;
  return std::pow(wealth, 12.0 / static_cast<double>(series.size())) - 1.0;
}

double sharpe(const std::vector<double>& series) {
  return naive_mean(series) / naive_sample_std(series);
}

double sortino(const std::vector<double>& series) {
  std::vector<double> downside;
  for (double r : series) {
    if (r < 0.0) downside.push_back(r);
  }
  return naive_mean(series) / naive_sample_std(downside);
}

double max_drawdown(const std::vector<double>& series) {
  double wealth = 1.0, peak = 1.0, mdd = 0.0;
  for (double r : series) {
    wealth *= 1.0 + r;
    if (wealth > peak) peak = wealth;
    double dd = (peak - wealth) / peak;
    if (dd > mdd) mdd = dd;
  }
  return mdd;
}

double alpha(const std::vector<std::vector<double>>& realized,
             const std::vector<std::vector<double>>& predicted) {
  // realized/predicted indexed [month][stock]; alpha averages per-stock
  // mean differences, which equals the mean over all cells.
  const std::size_t n_stocks = realized.front().size();
  double sum = 0.0;
  for (std::size_t s = 0; s < n_stocks; ++s) {
    double acc = 0.0;
    for (std::size_t t = 0; t < realized.size(); ++t) {
      acc += realized[t][s] - predicted[t][s];
    }
    sum += acc / static_cast<double>(realized.size());
  }
  return sum / static_cast<double>(n_stocks);
}

}  // namespace oracle

}  // namespace fap
