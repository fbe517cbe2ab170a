// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned in code next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fap/backtest.hpp"
#include "fap/config.hpp"
#include "fap/errors.hpp"
#include "fap/evaluation.hpp"
#include "fap/linear.hpp"
#include "fap/mlp.hpp"
#include "fap/pipeline.hpp"
#include "fap/rng.hpp"
#include "fap/split.hpp"
#include "fap/synthetic.hpp"
#include "gradient_check.hpp"

using namespace fap;

namespace {

namespace fs = std::filesystem;

struct Checker {
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void require_close(double actual, double expected, double tol, const std::string& what) {
    if (!(std::abs(actual - expected) <= tol)) {
      failures.push_back(what + ": got " + std::to_string(actual) + ", expected " +
                         std::to_string(expected) + " (tol " + std::to_string(tol) + ")");
    }
  }
};

fs::path scratch_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("fap_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool close12(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// --------------------------------------------------------------------------

void criterion_architecture(Checker& c) {
  using W = std::vector<int>;
  c.require(pyramid_widths({182, 1, 1, PyramidMode::fixed_main}) == W{15}, "main L1");
  c.require(pyramid_widths({182, 1, 2, PyramidMode::fixed_main}) == W{36, 6}, "main L2");
  c.require(pyramid_widths({182, 1, 3, PyramidMode::fixed_main}) == W{56, 15, 4}, "main L3");
  c.require(pyramid_widths({182, 1, 4, PyramidMode::fixed_main}) == W{73, 25, 9, 3}, "main L4");
  c.require(pyramid_widths({182, 1, 5, PyramidMode::fixed_main}) == W{87, 36, 15, 6, 3},
            "main L5");
  c.require(pyramid_widths({182, 1, 1, PyramidMode::fixed_gkx}) == W{32}, "gkx L1");
  c.require(pyramid_widths({182, 1, 2, PyramidMode::fixed_gkx}) == W{32, 16}, "gkx L2");
  c.require(pyramid_widths({182, 1, 3, PyramidMode::fixed_gkx}) == W{32, 16, 8}, "gkx L3");
  c.require(pyramid_widths({182, 1, 4, PyramidMode::fixed_gkx}) == W{32, 16, 8, 4}, "gkx L4");
  c.require(pyramid_widths({182, 1, 5, PyramidMode::fixed_gkx}) == W{32, 16, 8, 4, 2},
            "gkx L5");
  c.require(pyramid_widths({182, 1, 2, PyramidMode::formula, Rounding::floor}) == W{32, 5},
            "formula (182, 1, 2, floor)");
}

void criterion_split(Checker& c) {
  SplitPlan full = build_split_plan(Month::parse("1957-01"), Month::parse("2003-01"), 119, 12,
                                    Month::parse("2021-12"));
  c.require(full.iterations.size() == 9, "full plan iteration count");
  c.require(full.iterations.front().train.length() == 553, "initial training months");
  c.require(full.iterations.front().validation.length() == 119, "validation months");
  c.require(full.total_predict_months() == 108, "full plan OOS months");
  for (const auto& it : full.iterations) {
    c.require(it.validation.length() == 119, "constant validation length");
  }

  SplitPlan pre = build_split_plan(Month::parse("1957-01"), Month::parse("2003-01"), 119, 12,
                                   Month::parse("2019-11"));
  c.require(pre.total_predict_months() == 83, "pre-pandemic OOS months");
  c.require(pre.iterations.back().predict.length() == 11, "truncated final window");
}

void criterion_gradients(Checker& c) {
  Rng data_rng(20240605);
  int checked = 0;
  for (int k = 0; k < 20; ++k) {
    const int input = 4 + k % 7;           // 4..10
    const int depth = 1 + k % 3;           // 1..3
    const bool batch_norm = k % 2 == 0;
    const Eigen::Index samples = 8 + (k * 3) % 25;  // 8..32
    std::vector<int> hidden;
    for (int l = 1; l <= depth; ++l) hidden.push_back(input - l);

    Eigen::MatrixXd X(samples, input);
    Eigen::MatrixXd y(samples, 1);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = data_rng.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = data_rng.normal();

    for (double lambda : {0.0, 0.01}) {
      MLPNetwork net = testing::random_test_net(input, hidden, batch_norm,
                                                9000 + static_cast<std::uint64_t>(k));
      double gap = testing::max_gradient_gap(net, X, y, lambda);
      ++checked;
      c.require(gap < 1e-4, "net " + std::to_string(k) + " lambda " + std::to_string(lambda) +
                                ": max relative gradient error " + std::to_string(gap));
    }
  }
  c.require(checked == 40, "expected 20 nets x 2 lambdas");
}

void criterion_adam(Checker& c) {
  // Five steps on f(theta) = sum a_i theta_i^2, traced by hand.
  Eigen::Vector3d a(1.0, 2.5, 0.5);
  Eigen::VectorXd params(3);
  params << 1.0, -1.0, 2.0;
  TrainConfig config;
  AdamState state = AdamState::zeros(3);
  double theta[3] = {1.0, -1.0, 2.0};
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  for (int step = 1; step <= 5; ++step) {
    Eigen::VectorXd grads = 2.0 * a.array() * params.array();
    adam_step(params, grads, state, config);
    for (int i = 0; i < 3; ++i) {
      double g = 2.0 * a(i) * theta[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      double mhat = m[i] / (1.0 - std::pow(0.9, step));
      double vhat = v[i] / (1.0 - std::pow(0.999, step));
      theta[i] -= 0.001 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    for (int i = 0; i < 3; ++i) {
      c.require_close(params(i), theta[i], 1e-12,
                      "hand trace step " + std::to_string(step) + " coord " + std::to_string(i));
    }
  }

  for (double scale : {1e-3, 1.0, 1e3}) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g(1);
    g << scale;
    AdamState s = AdamState::zeros(1);
    TrainConfig tc;
    adam_step(p, g, s, tc);
    c.require(std::abs(std::abs(p(0)) - tc.learning_rate) < 1e-6,
              "first-step magnitude at gradient scale " + std::to_string(scale));
  }
}

void criterion_early_stopping(Checker& c) {
  // Scripted validation sequence: improvements at epochs 1, 2, 4; then three
  // worse epochs exhaust patience 3 at epoch 7, returning epoch 4.
  const std::vector<double> scripted{0.9, 0.7, 0.8, 0.6, 0.65, 0.66, 0.67, 0.2, 0.1};
  EarlyStopper stopper(3);
  int best_epoch = 0;
  int halted_after = 0;
  for (std::size_t i = 0; i < scripted.size(); ++i) {
    if (stopper.observe(scripted[i])) best_epoch = static_cast<int>(i) + 1;
    if (stopper.should_stop()) {
      halted_after = static_cast<int>(i) + 1;
      break;
    }
  }
  c.require(best_epoch == 4, "snapshot epoch is the global best of the observed prefix");
  c.require(halted_after == 7, "halt after patience consecutive non-improving epochs");
  c.require(stopper.best() == 0.6, "best validation value retained");

  // Same semantics through train(): when training stops before max_epochs,
  // exactly patience epochs follow the best one, and the snapshot attains
  // the lowest logged validation MSE.
  Rng rng(991);
  Eigen::MatrixXd X(160, 4);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  Eigen::VectorXd w(4);
  w << 0.5, -0.25, 0.1, 0.8;
  Eigen::VectorXd y = X * w;
  MLPNetwork net = make_network(4, {3}, 1, false, 17);
  TrainConfig tc;
  tc.max_epochs = 120;
  tc.patience = 7;
  tc.seed = 5;
  TrainResult result = train(std::move(net), X.topRows(120), y.head(120), X.bottomRows(40),
                             y.tail(40), tc);
  double logged_min = std::numeric_limits<double>::infinity();
  for (const auto& rec : result.log) logged_min = std::min(logged_min, rec.val_mse);
  c.require(result.log[result.best_epoch - 1].val_mse == logged_min,
            "returned snapshot has the lowest logged validation MSE");
  if (result.log.size() < static_cast<std::size_t>(tc.max_epochs)) {
    c.require(static_cast<int>(result.log.size()) == result.best_epoch + tc.patience,
              "stopped exactly patience epochs after the best");
  }
}

void criterion_metric_oracles(Checker& c) {
  Rng rng(777001);
  for (int rep = 0; rep < 100; ++rep) {
    const int T = 12 + static_cast<int>(rng.below(28));
    const int h = 2 + static_cast<int>(rng.below(5));
    Eigen::VectorXd r(T), rhat(T);
    std::vector<double> rv(T), rhatv(T);
    for (int t = 0; t < T; ++t) {
      r(t) = rv[t] = rng.normal(0.003, 0.04);
      rhat(t) = rhatv[t] = rng.normal(0.003, 0.04);
    }
    double train_mean = rng.normal(0.0, 0.01);

    c.require(close12(mse(r, rhat), oracle::mse(rv, rhatv)),
              "mse vs oracle, fixture " + std::to_string(rep));
    c.require(close12(oos_r2(r, rhat, train_mean), oracle::oos_r2(rv, rhatv, train_mean)),
              "oos_r2 vs oracle, fixture " + std::to_string(rep));
    c.require(close12(annualized_return(r), oracle::annualized_return(rv)),
              "annualized return vs oracle, fixture " + std::to_string(rep));
    c.require(close12(sharpe(r), oracle::sharpe(rv)),
              "sharpe vs oracle, fixture " + std::to_string(rep));
    c.require(close12(max_drawdown(r), oracle::max_drawdown(rv)),
              "max drawdown vs oracle, fixture " + std::to_string(rep));
    int negatives = 0;
    for (double v : rv) negatives += v < 0.0;
    if (negatives >= 2) {
      c.require(close12(sortino(r), oracle::sortino(rv)),
                "sortino vs oracle, fixture " + std::to_string(rep));
    }

    Eigen::MatrixXd em(T, h), en(T, h);
    std::vector<std::vector<double>> vm(T, std::vector<double>(h));
    std::vector<std::vector<double>> vn(T, std::vector<double>(h));
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < h; ++i) {
        em(t, i) = vm[t][i] = rng.normal();
        en(t, i) = vn[t][i] = rng.normal();
      }
    }
    c.require(close12(dm_test(em, en).statistic, oracle::dm_statistic(vm, vn)),
              "dm vs oracle, fixture " + std::to_string(rep));
  }

  // Hand fixtures, asserted exactly or at hand-arithmetic tolerance.
  {
    Eigen::VectorXd r(2), rhat(2);
    r << 0.1, -0.1;
    rhat << 0.05, -0.05;
    c.require_close(oos_r2(r, rhat, 0.0), 0.75, 1e-15, "oos_r2 hand fixture");
    Eigen::VectorXd a(1), b(1);
    a << 0.3;
    b << 0.1;
    c.require_close(mse(a, b), 0.04, 1e-15, "mse hand fixture");

    Eigen::VectorXd year = Eigen::VectorXd::Constant(12, 0.01);
    c.require_close(annualized_return(year), std::pow(1.01, 12) - 1.0, 1e-15,
                    "annualized hand fixture");

    Eigen::VectorXd twopoint(2);
    twopoint << 0.01 + 0.01 * std::sqrt(2.0), 0.01 - 0.01 * std::sqrt(2.0);
    c.require_close(sharpe(twopoint), 0.5, 1e-12, "sharpe hand fixture");

    Eigen::VectorXd path(3);
    path << 0.2, -0.25, 1.1 / 0.9 - 1.0;
    c.require_close(max_drawdown(path), 0.25, 1e-12, "max drawdown hand fixture");
  }

  // Alpha equals the brute-force mean-difference oracle on a random fixture.
  {
    Rng rng(606);
    const int T = 18, N = 5;
    PredictionSet set;
    for (int t = 0; t < T; ++t) set.months.push_back(Month::parse("2014-01").plus(t));
    for (int s = 0; s < N; ++s) set.stocks.push_back("S" + std::to_string(s));
    set.realized.resize(T, N);
    set.predicted.resize(T, N);
    std::vector<std::vector<double>> rv(T, std::vector<double>(N));
    std::vector<std::vector<double>> pv(T, std::vector<double>(N));
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < N; ++s) {
        set.realized(t, s) = rv[t][s] = rng.normal(0.01, 0.05);
        set.predicted(t, s) = pv[t][s] = rng.normal(0.0, 0.05);
      }
    }
    set.train_mean = Eigen::VectorXd::Zero(N);
    AlphaResult alpha = jensens_alpha(set);
    c.require(close12(alpha.alpha, oracle::alpha(rv, pv)), "alpha vs brute-force oracle");
  }
}

void criterion_dm(Checker& c) {
  Eigen::MatrixXd em(2, 1), en(2, 1);
  em << 2.0, 4.0;
  en << 1.0, 1.0;
  DMResult result = dm_test(em, en);
  c.require_close(result.statistic, 2.0, 1e-15, "hand fixture statistic");
  c.require(result.dbar == 2.0, "hand fixture mean difference");

  Rng rng(88);
  Eigen::MatrixXd am(15, 6), an(15, 6);
  for (Eigen::Index i = 0; i < am.size(); ++i) {
    am.data()[i] = rng.normal();
    an.data()[i] = rng.normal();
  }
  c.require(dm_test(am, an).statistic == -dm_test(an, am).statistic,
            "antisymmetry is exact");
}

void criterion_linear_recovery(Checker& c) {
  SyntheticSpec spec;
  spec.n_stocks = 20;
  spec.n_factors = 10;
  spec.n_months = 300;
  spec.noise_std = 0.0;
  spec.seed = 4242;
  SyntheticData data = generate(spec);

  const int n_train = 240, n_oos = 60;
  double worst_beta_gap = 0.0;
  double worst_r2 = 1.0;
  double worst_pcr_gap = 0.0;
  for (int s = 0; s < spec.n_stocks; ++s) {
    Eigen::MatrixXd X = data.factors.values().topRows(n_train);
    Eigen::VectorXd y = data.returns.values().col(s).head(n_train);
    LinearModel ols = fit_ols(X, y);
    worst_beta_gap = std::max(
        worst_beta_gap,
        (ols.coefficients - data.truth.beta.row(s).transpose()).cwiseAbs().maxCoeff());

    Eigen::MatrixXd X_oos = data.factors.values().bottomRows(n_oos);
    Eigen::VectorXd y_oos = data.returns.values().col(s).tail(n_oos);
    worst_r2 = std::min(worst_r2, oos_r2(y_oos, predict_linear(ols, X_oos), y.mean()));

    LinearModel pcr = fit_pcr(X, y, 1.0);
    worst_pcr_gap = std::max(worst_pcr_gap, (predict_linear(pcr, X_oos) -
                                             predict_linear(ols, X_oos)).cwiseAbs().maxCoeff());
  }
  c.require(worst_beta_gap < 1e-8,
            "OLS recovers beta (worst gap " + std::to_string(worst_beta_gap) + ")");
  c.require(worst_r2 > 0.999, "OLS OOS R^2 (worst " + std::to_string(worst_r2) + ")");
  c.require(worst_pcr_gap < 1e-8,
            "PCR(threshold 1) matches OLS (worst gap " + std::to_string(worst_pcr_gap) + ")");
}

void criterion_nonlinear_advantage(Checker& c) {
  int wins = 0;
  std::string record;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticSpec spec;
    spec.n_stocks = 4;
    spec.n_factors = 8;
    spec.n_months = 600;
    spec.noise_std = 0.01;
    spec.nonlinearity = Nonlinearity::relu_mixture;
    spec.missing_frac = 0.0;
    spec.seed = seed;
    SyntheticData data = generate(spec);

    const int n_train = 400, n_val = 100, n_oos = 100;
    double mlp_r2 = 0.0, ols_r2 = 0.0;
    for (int s = 0; s < spec.n_stocks; ++s) {
      Eigen::MatrixXd F = data.factors.values();
      Eigen::VectorXd y = data.returns.values().col(s);
      Eigen::MatrixXd X_train = F.topRows(n_train);
      Eigen::MatrixXd X_val = F.middleRows(n_train, n_val);
      Eigen::MatrixXd X_oos = F.bottomRows(n_oos);
      Eigen::VectorXd y_train = y.head(n_train);
      Eigen::VectorXd y_val = y.segment(n_train, n_val);
      Eigen::VectorXd y_oos = y.tail(n_oos);
      const double train_mean = y_train.mean();

      LinearModel ols = fit_ols(F.topRows(n_train + n_val), y.head(n_train + n_val));
      ols_r2 += oos_r2(y_oos, predict_linear(ols, X_oos), train_mean);

      auto widths = pyramid_widths({8, 1, 2, PyramidMode::formula, Rounding::floor});
      MLPNetwork net = make_network(8, widths, 1, true,
                                    mix_seed(seed, static_cast<std::uint64_t>(s), 7), 0.9);
      TrainConfig tc;
      tc.learning_rate = 0.01;
      tc.max_epochs = 500;
      tc.patience = 50;
      tc.lambda = 1e-4;
      tc.seed = mix_seed(seed, static_cast<std::uint64_t>(s), 8);
      TrainResult result = train(std::move(net), X_train, y_train, X_val, y_val, tc);
      MLPNetwork best = result.best;
      mlp_r2 += oos_r2(y_oos, forward(best, X_oos, false).col(0), train_mean);
    }
    mlp_r2 /= spec.n_stocks;
    ols_r2 /= spec.n_stocks;
    if (mlp_r2 > ols_r2) ++wins;
    record += " seed" + std::to_string(seed) + (mlp_r2 > ols_r2 ? "+" : "-");
  }
  c.require(wins >= 8, "fw2 beats OLS in " + std::to_string(wins) + "/10 seeds:" + record);
}

void criterion_backtest_sanity(Checker& c) {
  // All-positive agreeing signals at zero cost reproduce buy-and-hold after
  // the one-month entry lag, exactly.
  Rng rng(512);
  const int T = 30, N = 3;
  PredictionSet set;
  set.months.clear();
  for (int t = 0; t < T; ++t) set.months.push_back(Month::parse("2016-01").plus(t));
  for (int s = 0; s < N; ++s) set.stocks.push_back("S" + std::to_string(s + 1));
  set.realized.resize(T, N);
  for (Eigen::Index i = 0; i < set.realized.size(); ++i) {
    set.realized.data()[i] = 0.001 + std::abs(rng.normal(0.01, 0.02));
  }
  set.predicted = set.realized;
  set.train_mean = Eigen::VectorXd::Zero(N);

  BacktestLedger ledger = generate_signals(set, SignalRule{});
  apply_costs(ledger, 0.0);
  Eigen::VectorXd strategy = portfolio_returns(ledger, Weighting::equal);
  Eigen::VectorXd bh = buy_and_hold(set, Weighting::equal);
  c.require(strategy(0) == 0.0, "entry lag leaves the first month flat");
  c.require((strategy.tail(T - 1) - bh.tail(T - 1)).cwiseAbs().maxCoeff() == 0.0,
            "strategy equals buy-and-hold after the lag, exactly");

  // Cost monotonicity across 0 / 50 / 100 bp on a mixed-sign fixture.
  PredictionSet mixed = set;
  for (Eigen::Index i = 0; i < mixed.realized.size(); ++i) {
    mixed.realized.data()[i] = rng.normal(0.002, 0.04);
    mixed.predicted.data()[i] = rng.normal(0.002, 0.04);
  }
  double last_total = std::numeric_limits<double>::infinity();
  for (double bp : {0.0, 50.0, 100.0}) {
    BacktestLedger l = generate_signals(mixed, SignalRule{});
    apply_costs(l, bp);
    double total = 0.0;
    for (const auto& sl : l.stocks) total += sl.net.sum();
    c.require(total <= last_total, "net returns non-increasing at " + std::to_string(bp) + "bp");
    last_total = total;
  }

  Eigen::VectorXd monotone(5);
  monotone << 0.01, 0.0, 0.02, 0.005, 0.0;
  c.require(max_drawdown(monotone) == 0.0, "MDD of a monotone path is 0");

  // Hand fixtures: signal trace, two 50bp charges, and weighted aggregation.
  {
    PredictionSet fixture;
    fixture.stocks = {"S1"};
    for (int t = 0; t < 4; ++t) fixture.months.push_back(Month::parse("2020-01").plus(t));
    fixture.realized.resize(4, 1);
    fixture.realized << 0.02, 0.0, -0.01, -0.02;  // open month has zero return
    fixture.predicted.resize(4, 1);
    fixture.predicted << 0.05, 0.01, -0.01, -0.03;
    fixture.train_mean = Eigen::VectorXd::Zero(1);
    BacktestLedger l = generate_signals(fixture, SignalRule{});
    c.require(l.stocks[0].position == std::vector<int>{0, 1, 1, 0},
              "hand trace: open effective month 2, close effective month 4");
    apply_costs(l, 50.0);
    c.require(std::abs(l.stocks[0].cost.sum() - 0.01) < 1e-15,
              "two trades at 50bp cost 0.01 in total");
  }
  {
    PredictionSet two;
    two.stocks = {"S1", "S2"};
    two.months = {Month::parse("2020-02")};
    two.realized.resize(1, 2);
    two.realized << 0.02, 0.04;
    two.predicted = Eigen::MatrixXd::Zero(1, 2);
    two.train_mean = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd equal = buy_and_hold(two, Weighting::equal);
    c.require(std::abs(equal(0) - 0.03) < 1e-15, "equal weighting of (0.02, 0.04) is 0.03");

    std::vector<Month> cap_months = {Month::parse("2020-01"), Month::parse("2020-02")};
    Eigen::MatrixXd cap_values(2, 2);
    cap_values << 100.0, 300.0, 90.0, 310.0;
    Panel caps(cap_months, {"S1", "S2"}, cap_values, PanelKind::marketcap);
    Eigen::VectorXd value = buy_and_hold(two, Weighting::value, &caps);
    c.require(std::abs(value(0) - (0.25 * 0.02 + 0.75 * 0.04)) < 1e-15,
              "prior-month caps (100, 300) weight returns to 0.035");
  }
}

std::string hash_artifacts(const fs::path& dir) {
  // Concatenated per-file FNV hashes over every artifact except the manifest
  // (whose stage timings are wall-clock).
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "run.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::string combined;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    combined += fs::relative(path, dir).string();
    combined += ':';
    combined += std::to_string(fnv1a(buf.str()));
    combined += '\n';
  }
  return std::to_string(fnv1a(combined)) + " over " + std::to_string(files.size()) + " files";
}

RunConfig synth_run_config(const fs::path& dir, int n_stocks, int n_factors, int n_months,
                           const std::string& roster) {
  std::ostringstream text;
  text << "[data]\n"
       << "returns = " << (dir / "returns.csv").string() << "\n"
       << "factors = " << (dir / "factors.csv").string() << "\n"
       << "marketcap = " << (dir / "marketcap.csv").string() << "\n"
       << "riskfree = " << (dir / "riskfree.csv").string() << "\n"
       << "[split]\n"
       << "train_start = 1990-01\n"
       << "initial_train_end = " << Month::parse("1990-01").plus(n_months / 2 - 1).str() << "\n"
       << "val_len = " << n_months / 5 << "\n"
       << "step = 12\n"
       << "[periods]\n"
       << "full = " << Month::parse("1990-01").plus(n_months - 1).str() << "\n"
       << "short = " << Month::parse("1990-01").plus(n_months - 1 - n_months / 10).str() << "\n"
       << "[models]\n"
       << "roster = " << roster << "\n"
       << "[train]\n"
       << "max_epochs = 60\n"
       << "patience = 10\n"
       << "[run]\n"
       << "seed = 33\n"
       << "out = " << (dir / "out").string() << "\n"
       << "[synth]\n"
       << "n_stocks = " << n_stocks << "\n"
       << "n_factors = " << n_factors << "\n"
       << "n_months = " << n_months << "\n"
       << "noise_std = 0.02\n"
       << "missing_frac = 0.08\n"
       << "protected_tail_months = " << (n_months / 2 - n_months / 5 + 2) << "\n"
       << "seed = 33\n";
  RunConfig config = parse_config_text(text.str());
  write_synthetic_csvs(generate(config.synth), dir);
  return config;
}

void criterion_determinism(Checker& c) {
  fs::path dir = scratch_dir("determinism");
  RunConfig config = synth_run_config(dir, 8, 6, 160, "ols,fw1");
  std::ostringstream log;

  RunConfig a = config;
  a.out_dir = dir / "run_a";
  run_pipeline(a, log);
  RunConfig b = config;
  b.out_dir = dir / "run_b";
  run_pipeline(b, log);
  RunConfig p = config;
  p.out_dir = dir / "run_p";
  p.jobs = 4;
  run_pipeline(p, log);

  std::string ha = hash_artifacts(a.out_dir);
  std::string hb = hash_artifacts(b.out_dir);
  std::string hp = hash_artifacts(p.out_dir);
  c.require(ha == hb, "two serial runs are bit-identical (" + ha + " vs " + hb + ")");
  c.require(ha == hp, "jobs=1 and jobs=4 are bit-identical (" + ha + " vs " + hp + ")");
  fs::remove_all(dir);
}

void criterion_smoke(Checker& c) {
  fs::path dir = scratch_dir("smoke");
  RunConfig config = synth_run_config(dir, 20, 10, 300, "ols,pcr,fw1,fw2");
  std::ostringstream log;
  run_pipeline(config, log);

  const std::vector<std::string> expected = {
      "metrics.csv", "dm_matrix.csv", "report.csv", "splits.csv", "run.json",
      "predictions_ols.csv", "predictions_pcr.csv", "predictions_fw1.csv",
      "predictions_fw2.csv",
      "importance_ols_full.csv", "importance_pcr_full.csv", "importance_fw1_full.csv",
      "importance_fw2_full.csv", "importance_fw2_short.csv",
      "backtest_ols_equal_full.csv", "backtest_fw2_value_full.csv",
      "backtest_buy_and_hold_equal_full.csv", "backtest_buy_and_hold_value_short.csv",
      "cumret_equal_full.csv", "cumret_value_full.csv", "cumret_equal_short.csv",
      "cumret_value_short.csv", "cumret_equal_full.svg"};
  for (const auto& name : expected) {
    c.require(fs::exists(config.out_dir / name), "artifact present: " + name);
  }
  c.require(!fs::exists(config.out_dir / "INCOMPLETE"), "run not marked incomplete");
  fs::remove_all(dir);
}

// --------------------------------------------------------------------------

struct Criterion {
  std::string description;
  std::function<void(Checker&)> body;
  double time_budget_seconds;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"architecture fidelity (fixed tables and width formula)", criterion_architecture, 1.0},
      {"split fidelity (553/119/108 and the 83-month variant)", criterion_split, 10.0},
      {"gradient correctness vs central finite differences", criterion_gradients, 30.0},
      {"Adam optimizer hand-trace and first-step magnitude", criterion_adam, 10.0},
      {"early stopping semantics on a scripted sequence", criterion_early_stopping, 10.0},
      {"metric agreement with naive oracles and hand fixtures", criterion_metric_oracles, 60.0},
      {"DM antisymmetry and sign convention", criterion_dm, 10.0},
      {"linear recovery on noiseless synthetic data", criterion_linear_recovery, 10.0},
      {"nonlinear advantage of fw2 over OLS", criterion_nonlinear_advantage, 600.0},
      {"backtest sanity (lagged buy-and-hold, cost monotonicity, MDD)",
       criterion_backtest_sanity, 10.0},
      {"bitwise determinism across runs and job counts", criterion_determinism, 300.0},
      {"end-to-end smoke on the 20x10x300 panel", criterion_smoke, 900.0},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Checker checker;
    auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].body(checker);
    } catch (const std::exception& e) {
      checker.failures.push_back(std::string("exception: ") + e.what());
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > criteria[i].time_budget_seconds) {
      checker.failures.push_back("runtime " + std::to_string(seconds) + "s exceeds budget " +
                                 std::to_string(criteria[i].time_budget_seconds) + "s");
    }
    const bool ok = checker.failures.empty();
    failures += !ok;
    std::printf("[%s] %2zu. %s (%.2fs)\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].description.c_str(), seconds);
    for (const auto& failure : checker.failures) {
      std::printf("       - %s\n", failure.c_str());
    }
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
