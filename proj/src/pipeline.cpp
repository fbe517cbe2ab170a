#include "fap/pipeline.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fap/backtest.hpp"
#include "fap/csv.hpp"
#include "fap/errors.hpp"
#include "fap/rng.hpp"
#include "fap/synthetic.hpp"

namespace fap {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Artifact bookkeeping

void write_stamp(const RunConfig& config) {
  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir / "config_hash.txt", std::ios::binary);
  out << config_hash(config) << '\n';
}

void check_stamp(const RunConfig& config, const std::string& stage) {
  fs::path path = config.out_dir / "config_hash.txt";
  std::ifstream in(path);
  if (!in) {
    throw StaleArtifactError(stage + ": no config stamp in " + config.out_dir.string() +
                             " (run the train stage first)");
  }
  std::string stored;
  in >> stored;
  if (stored != config_hash(config)) {
    throw StaleArtifactError(stage + ": artifacts in " + config.out_dir.string() +
                             " were built with config " + stored + ", current is " +
                             config_hash(config));
  }
}

std::string params_filename(const std::string& stock, int iter, const std::string& model) {
  return "model_" + stock + "_" + std::to_string(iter) + "_" + model + ".params";
}

// ---------------------------------------------------------------------------
// Per-iteration training inputs

struct IterationInputs {
  DateRange train;
  DateRange validation;
  DateRange predict;
  StandardizeStats stats;
  Eigen::MatrixXd X_train;
  Eigen::MatrixXd X_val;
  Eigen::MatrixXd X_pred;
  Eigen::MatrixXd X_insample;  // train + validation rows, for the linear fits
  Eigen::Index pred_offset = 0;  // first predict row within the OOS grid
};

std::vector<IterationInputs> build_iteration_inputs(const PipelineData& data) {
  std::vector<IterationInputs> out;
  out.reserve(data.plan.iterations.size());
  for (const auto& it : data.plan.iterations) {
    auto [std_panel, stats] = impute_and_standardize(data.factors, it.train);
    IterationInputs inputs;
    inputs.train = it.train;
    inputs.validation = it.validation;
    inputs.predict = it.predict;
    inputs.stats = stats;
    inputs.X_train = std_panel.slice(it.train);
    inputs.X_val = std_panel.slice(it.validation);
    inputs.X_pred = std_panel.slice(it.predict);
    inputs.X_insample = std_panel.slice(DateRange{it.train.start, it.validation.end});
    inputs.pred_offset = it.predict.start.index - data.oos.start.index;
    out.push_back(std::move(inputs));
  }
  return out;
}

// Stock's return slice with missing cells filled by its observed mean over
// the iteration's training window.
struct StockTargets {
  Eigen::VectorXd train;
  Eigen::VectorXd val;
  Eigen::VectorXd insample;
};

StockTargets stock_targets(const PipelineData& data, const IterationInputs& inputs,
                           Eigen::Index stock) {
  Eigen::VectorXd train_raw = data.returns.slice(inputs.train).col(stock);
  double sum = 0.0;
  Eigen::Index observed = 0;
  for (Eigen::Index i = 0; i < train_raw.size(); ++i) {
    if (!Panel::is_missing(train_raw(i))) {
      sum += train_raw(i);
      ++observed;
    }
  }
  if (observed == 0) {
    throw DataError("stock '" + data.returns.columns()[stock] +
                    "' has no observed return in a training window");
  }
  const double fill = sum / static_cast<double>(observed);
  auto imputed = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (Panel::is_missing(v(i))) v(i) = fill;
    }
    return v;
  };
  StockTargets targets;
  targets.train = imputed(train_raw);
  targets.val = imputed(data.returns.slice(inputs.validation).col(stock));
  targets.insample =
      imputed(data.returns.slice(DateRange{inputs.train.start, inputs.validation.end}).col(stock));
  return targets;
}

std::vector<int> mlp_widths(const ModelSpec& spec, int input_dim, const RunConfig& config) {
  PyramidSpec pyramid;
  pyramid.input_dim = input_dim;
  pyramid.output_dim = 1;
  pyramid.depth = spec.depth;
  pyramid.mode = spec.mode;
  pyramid.rounding = config.rounding;
  return pyramid_widths(pyramid);
}

// ---------------------------------------------------------------------------
// Portfolio helpers

Eigen::VectorXd cumulative_wealth(const Eigen::VectorXd& series) {
  Eigen::VectorXd wealth(series.size());
  double acc = 1.0;
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    acc *= 1.0 + series(t);
    wealth(t) = acc;
  }
  return wealth;
}

struct PortfolioSeries {
  Eigen::VectorXd gross;
  Eigen::VectorXd cost;
  Eigen::VectorXd net;
};

PortfolioSeries aggregate_portfolio(const BacktestLedger& ledger, Weighting weighting,
                                    const Panel* caps) {
  PortfolioSeries out;
  out.net = portfolio_returns(ledger, weighting, caps);
  BacktestLedger gross_view = ledger;
  for (auto& sl : gross_view.stocks) sl.net = sl.gross;
  out.gross = portfolio_returns(gross_view, weighting, caps);
  out.cost = out.gross - out.net;
  return out;
}

void write_svg_chart(const fs::path& path, const std::vector<Month>& months,
                     const std::vector<std::pair<std::string, Eigen::VectorXd>>& series,
                     const std::string& title) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                   "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
  const double width = 960, height = 540;
  const double left = 70, right = 40, top = 45, bottom = 45;
  double lo = 0.0, hi = 0.0;
  for (const auto& [name, values] : series) {
    lo = std::min(lo, values.minCoeff());
    hi = std::max(hi, values.maxCoeff());
  }
  if (hi == lo) hi = lo + 1.0;
  const double x_span = static_cast<double>(std::max<std::size_t>(months.size() - 1, 1));
  auto x_at = [&](std::size_t t) {
    return left + (width - left - right) * static_cast<double>(t) / x_span;
  };
  auto y_at = [&](double v) {
    return height - bottom - (height - top - bottom) * (v - lo) / (hi - lo);
  };
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">" << title << "</text>\n";
  // Axes and the zero line.
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right
      << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  if (lo < 0.0 && hi > 0.0) {
    out << "<line x1=\"" << left << "\" y1=\"" << fmt(y_at(0.0)) << "\" x2=\"" << width - right
        << "\" y2=\"" << fmt(y_at(0.0)) << "\" stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (double v : {lo, (lo + hi) / 2.0, hi}) {
    out << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y_at(v) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(v)
        << "</text>\n";
  }
  out << "<text x=\"" << left << "\" y=\"" << height - bottom + 18
      << "\" font-size=\"11\" font-family=\"sans-serif\">" << months.front().str()
      << "</text>\n";
  out << "<text x=\"" << width - right << "\" y=\"" << height - bottom + 18
      << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
      << months.back().str() << "</text>\n";

  std::size_t color = 0;
  double legend_y = top + 6;
  for (const auto& [name, values] : series) {
    const char* stroke = kPalette[color % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (Eigen::Index t = 0; t < values.size(); ++t) {
      out << fmt(x_at(static_cast<std::size_t>(t))) << ',' << fmt(y_at(values(t))) << ' ';
    }
    out << "\"/>\n";
    out << "<rect x=\"" << width - right - 150 << "\" y=\"" << fmt(legend_y - 9)
        << "\" width=\"12\" height=\"12\" fill=\"" << stroke << "\"/>\n";
    out << "<text x=\"" << width - right - 132 << "\" y=\"" << fmt(legend_y + 1)
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << name << "</text>\n";
    legend_y += 16;
    ++color;
  }
  out << "</svg>\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Shared preparation

PipelineData prepare_inputs(const RunConfig& config) {
  Panel returns_raw = load_panel(config.returns_path, PanelKind::returns);
  Panel factors_raw = load_panel(config.factors_path, PanelKind::factors);
  Panel caps = load_panel(config.marketcap_path, PanelKind::marketcap);
  Panel riskfree = load_panel(config.riskfree_path, PanelKind::factors);
  if (riskfree.cols() != 1 || riskfree.columns()[0] != "rf") {
    throw SchemaError(config.riskfree_path.string() + ": expected a single 'rf' column");
  }

  // Excess returns: subtract the risk-free rate month by month.
  Eigen::MatrixXd excess = returns_raw.values();
  for (Eigen::Index r = 0; r < excess.rows(); ++r) {
    Month m = returns_raw.dates()[r];
    double rf = riskfree.values()(riskfree.row_of(m), 0);
    if (Panel::is_missing(rf)) {
      throw DataError(config.riskfree_path.string() + ": missing risk-free rate at " + m.str());
    }
    for (Eigen::Index c = 0; c < excess.cols(); ++c) {
      if (!Panel::is_missing(excess(r, c))) excess(r, c) -= rf;
    }
  }
  Panel excess_panel(returns_raw.dates(), returns_raw.columns(), std::move(excess),
                     PanelKind::returns);

  PipelineData data{
      excess_panel, factors_raw, std::move(caps),
      build_split_plan(config.train_start, config.initial_train_end, config.val_len,
                       config.step, config.max_test_end()),
      DateRange{}, DateRange{}, Eigen::VectorXd{}};
  data.initial_train = data.plan.iterations.front().train;
  data.oos = data.plan.test_range();

  if (!excess_panel.span().contains(DateRange{config.train_start, data.oos.end})) {
    throw CalendarError("returns panel does not cover " + config.train_start.str() + ".." +
                        data.oos.end.str());
  }
  if (!data.factors.span().contains(DateRange{config.train_start, data.oos.end})) {
    throw CalendarError("factors panel does not cover the configured span");
  }

  data.returns = filter_universe(excess_panel, data.initial_train, data.oos, config.filter);
  data.factors = filter_factors(data.factors, data.initial_train, config.filter);

  data.train_mean.resize(data.returns.cols());
  Eigen::MatrixXd train_rows = data.returns.slice(data.initial_train);
  for (Eigen::Index c = 0; c < train_rows.cols(); ++c) {
    double sum = 0.0;
    Eigen::Index observed = 0;
    for (Eigen::Index r = 0; r < train_rows.rows(); ++r) {
      if (!Panel::is_missing(train_rows(r, c))) {
        sum += train_rows(r, c);
        ++observed;
      }
    }
    if (observed == 0) {
      throw DataError("stock '" + data.returns.columns()[c] +
                      "' has no observed return in the initial training window");
    }
    data.train_mean(c) = sum / static_cast<double>(observed);
  }
  return data;
}

ModelSpec resolve_model(const std::string& name, const RunConfig& config) {
  ModelSpec spec;
  spec.name = name;
  if (name == "ols") {
    spec.linear_kind = LinearKind::ols;
  } else if (name == "pls") {
    spec.linear_kind = LinearKind::pls;
  } else if (name == "pcr") {
    spec.linear_kind = LinearKind::pcr;
  } else if (name.rfind("gkx_fw", 0) == 0 && name.size() == 7) {
    spec.is_mlp = true;
    spec.depth = name[6] - '0';
    spec.mode = PyramidMode::fixed_gkx;
  } else if (name.rfind("fw", 0) == 0 && name.size() == 3) {
    spec.is_mlp = true;
    spec.depth = name[2] - '0';
    spec.mode = config.pyramid_mode;
  } else {
    throw ConfigError("unknown model '" + name + "'");
  }
  if (spec.is_mlp && (spec.depth < 1 || spec.depth > 5)) {
    throw ConfigError("model '" + name + "' has an unsupported depth");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Stages

void stage_synth(const RunConfig& config, std::ostream& log) {
  if (!config.has_synth) throw ConfigError("config has no [synth] section");
  SyntheticData data = generate(config.synth);
  fs::path dir = config.returns_path.parent_path();
  if (dir.empty()) dir = ".";
  write_synthetic_csvs(data, dir);
  // write_synthetic_csvs uses fixed file names inside the directory; move is
  // unnecessary because the config points at the same names by convention.
  log << "synth: wrote returns/factors/marketcap/riskfree CSVs under " << dir.string()
      << " (" << config.synth.n_stocks << " stocks, " << config.synth.n_factors
      << " factors, " << config.synth.n_months << " months)\n";
}

void stage_ingest_check(const RunConfig& config, std::ostream& log) {
  PipelineData data = prepare_inputs(config);
  log << "ingest-check: " << data.returns.cols() << " stocks kept, " << data.factors.cols()
      << " factors kept, span " << data.returns.dates().front().str() << ".."
      << data.returns.dates().back().str() << ", " << data.plan.iterations.size()
      << " split iterations, OOS " << data.oos.start.str() << ".." << data.oos.end.str()
      << "\n";
}

void stage_split(const RunConfig& config, std::ostream& log) {
  SplitPlan plan = build_split_plan(config.train_start, config.initial_train_end,
                                    config.val_len, config.step, config.max_test_end());
  fs::create_directories(config.out_dir);
  write_stamp(config);
  save_split_plan(plan, config.out_dir / "splits.csv");
  log << "split: " << plan.iterations.size() << " iterations, "
      << plan.total_predict_months() << " OOS months -> splits.csv\n";
}

namespace {

struct TrainTask {
  std::size_t model_idx;
  Eigen::Index stock;
  std::size_t iter_idx;
};

}  // namespace

void stage_train(const RunConfig& config, const TrainFilter& filter, std::ostream& log) {
  PipelineData data = prepare_inputs(config);
  fs::create_directories(config.out_dir / "params");
  write_stamp(config);
  save_split_plan(data.plan, config.out_dir / "splits.csv");
  const std::string hash = config_hash(config);

  std::vector<std::string> model_names = filter.models.empty() ? config.roster : filter.models;
  std::vector<ModelSpec> models;
  for (const auto& name : model_names) models.push_back(resolve_model(name, config));

  std::vector<Eigen::Index> stock_ids;
  if (filter.stocks.empty()) {
    for (Eigen::Index s = 0; s < data.returns.cols(); ++s) stock_ids.push_back(s);
  } else {
    for (const auto& name : filter.stocks) {
      auto idx = data.returns.column_index(name);
      if (!idx) throw ConfigError("stock '" + name + "' not in the filtered universe");
      stock_ids.push_back(*idx);
    }
  }

  const auto iterations = build_iteration_inputs(data);
  const Eigen::Index T_oos = data.oos.length();
  const int P = static_cast<int>(data.factors.cols());

  // Fail fast on invalid architectures before spawning workers.
  for (const auto& model : models) {
    if (model.is_mlp) mlp_widths(model, P, config);
  }

  std::vector<Eigen::MatrixXd> predictions(models.size());
  for (auto& m : predictions) m.setConstant(T_oos, data.returns.cols(),
                                            std::numeric_limits<double>::quiet_NaN());

  std::vector<TrainTask> tasks;
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (Eigen::Index s : stock_ids) {
      for (std::size_t i = 0; i < iterations.size(); ++i) tasks.push_back({m, s, i});
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<long> aborted_count{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto run_task = [&](const TrainTask& task) {
    const ModelSpec& model = models[task.model_idx];
    const IterationInputs& inputs = iterations[task.iter_idx];
    const std::string stock_name = data.returns.columns()[task.stock];
    StockTargets targets = stock_targets(data, inputs, task.stock);
    const fs::path params_path =
        config.out_dir / "params" /
        params_filename(stock_name, static_cast<int>(task.iter_idx) + 1, model.name);

    Eigen::VectorXd preds;
    if (model.is_mlp) {
      std::vector<int> hidden = mlp_widths(model, P, config);
      MLPNetwork net = make_network(P, hidden, 1, config.batch_norm,
                                    mix_seed(config.seed, static_cast<std::uint64_t>(task.stock),
                                             task.iter_idx, fnv1a(model.name)),
                                    config.train.batchnorm_momentum);
      TrainConfig tc = config.train;
      tc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(task.stock), task.iter_idx);
      TrainResult result =
          train(std::move(net), inputs.X_train, targets.train, inputs.X_val, targets.val, tc);
      if (result.aborted) aborted_count.fetch_add(1);
      MLPNetwork best = result.best;
      preds = forward(best, inputs.X_pred, false).col(0);
      save_network(best, params_path, hash);
    } else {
      LinearModel fitted;
      switch (model.linear_kind) {
        case LinearKind::ols:
          fitted = fit_ols(inputs.X_insample, targets.insample);
          break;
        case LinearKind::pls:
          fitted = fit_pls(inputs.X_insample, targets.insample, config.variance_threshold);
          break;
        case LinearKind::pcr:
          fitted = fit_pcr(inputs.X_insample, targets.insample, config.variance_threshold);
          break;
      }
      preds = predict_linear(fitted, inputs.X_pred);
      save_linear(fitted, params_path, hash);
    }
    predictions[task.model_idx].block(inputs.pred_offset, task.stock, preds.size(), 1) = preds;
  };

  auto worker = [&]() {
    while (true) {
      std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) break;
      try {
        run_task(tasks[k]);
      } catch (...) {
        std::lock_guard<std::mutex> guard(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(tasks.size());
        break;
      }
    }
  };

  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // OOS month grid for the prediction files.
  std::vector<Month> months;
  for (int t = 0; t < T_oos; ++t) months.push_back(data.oos.start.plus(t));
  for (std::size_t m = 0; m < models.size(); ++m) {
    CsvTable table;
    table.header.push_back("date");
    std::vector<Eigen::Index> cols =
        filter.stocks.empty() ? std::vector<Eigen::Index>{} : stock_ids;
    if (cols.empty()) {
      for (Eigen::Index s = 0; s < data.returns.cols(); ++s) cols.push_back(s);
    }
    for (Eigen::Index s : cols) table.header.push_back(data.returns.columns()[s]);
    for (Eigen::Index t = 0; t < T_oos; ++t) {
      std::vector<std::string> row{months[static_cast<std::size_t>(t)].str()};
      for (Eigen::Index s : cols) row.push_back(format_double(predictions[m](t, s)));
      table.rows.push_back(std::move(row));
    }
    write_csv(config.out_dir / ("predictions_" + models[m].name + ".csv"), table);
  }
  log << "train: " << tasks.size() << " fits (" << models.size() << " models x "
      << stock_ids.size() << " stocks x " << iterations.size() << " iterations), jobs="
      << jobs;
  if (aborted_count.load() > 0) {
    log << ", " << aborted_count.load() << " fits aborted on non-finite loss";
  }
  log << "\n";
}

PredictionSet load_prediction_set(const RunConfig& config, const PipelineData& data,
                                  const std::string& model_name) {
  fs::path path = config.out_dir / ("predictions_" + model_name + ".csv");
  if (!fs::exists(path)) {
    throw StaleArtifactError("missing " + path.string() + " (run the train stage)");
  }
  Panel pred_panel = load_panel(path, PanelKind::returns);
  if (pred_panel.columns() != data.returns.columns()) {
    throw StaleArtifactError(path.string() + ": stock columns do not match the universe");
  }
  if (pred_panel.dates().front() != data.oos.start || pred_panel.dates().back() != data.oos.end) {
    throw StaleArtifactError(path.string() + ": OOS month grid does not match the plan");
  }

  PredictionSet set;
  set.stocks = data.returns.columns();
  set.months = pred_panel.dates();
  set.predicted = pred_panel.values();
  set.realized = data.returns.slice(data.oos);
  set.train_mean = data.train_mean;
  set.validate();
  return set;
}

void stage_evaluate(const RunConfig& config, std::ostream& log) {
  check_stamp(config, "evaluate");
  PipelineData data = prepare_inputs(config);

  CsvTable table;
  table.header = {"stock", "model", "period", "oos_r2", "mse"};
  for (const auto& period : config.periods) {
    for (const auto& name : config.roster) {
      PredictionSet full = load_prediction_set(config, data, name);
      PredictionSet set = full.truncated(period.test_end);
      double r2_sum = 0.0, mse_sum = 0.0;
      for (Eigen::Index s = 0; s < set.realized.cols(); ++s) {
        double stock_r2 = oos_r2(set.realized.col(s), set.predicted.col(s), set.train_mean(s));
        double stock_mse = mse(set.realized.col(s), set.predicted.col(s));
        r2_sum += stock_r2;
        mse_sum += stock_mse;
        table.rows.push_back({set.stocks[s], name, period.label, format_double(stock_r2),
                              format_double(stock_mse)});
      }
      const double n = static_cast<double>(set.realized.cols());
      table.rows.push_back({"avg", name, period.label, format_double(r2_sum / n),
                            format_double(mse_sum / n)});
    }
  }
  write_csv(config.out_dir / "metrics.csv", table);
  log << "evaluate: metrics.csv (" << table.rows.size() << " rows)\n";
}

void stage_dm(const RunConfig& config, std::ostream& log) {
  check_stamp(config, "dm");
  if (config.roster.size() < 2) {
    log << "dm: only one model in the roster, DM matrix omitted\n";
    return;
  }
  PipelineData data = prepare_inputs(config);

  std::vector<PredictionSet> sets;
  for (const auto& name : config.roster) {
    sets.push_back(load_prediction_set(config, data, name));
  }

  CsvTable table;
  table.header = {"period", "model_m", "model_n", "dm_statistic", "p_value"};
  for (const auto& period : config.periods) {
    std::vector<Eigen::MatrixXd> errors;
    for (const auto& set : sets) {
      PredictionSet cut = set.truncated(period.test_end);
      errors.push_back((cut.realized - cut.predicted).cwiseAbs());
    }
    for (std::size_t i = 1; i < config.roster.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        DMResult result = dm_test(errors[i], errors[j], config.dm_hac);
        table.rows.push_back({period.label, config.roster[i], config.roster[j],
                              format_double(result.statistic),
                              format_double(normal_two_sided_p(result.statistic))});
      }
    }
  }
  write_csv(config.out_dir / "dm_matrix.csv", table);
  log << "dm: dm_matrix.csv (" << table.rows.size() << " pairs)\n";
}

namespace {

// Per-stock predictor that stitches the per-iteration models back together:
// raw (unstandardized) OOS factor rows go in, each block is standardized with
// its own iteration's training statistics, and the matching model predicts.
struct StitchedPredictor {
  struct Block {
    Eigen::Index offset;
    Eigen::Index rows;
    const StandardizeStats* stats;
    const LinearModel* linear;
    const MLPNetwork* mlp;
  };
  std::vector<Block> blocks;

  Eigen::VectorXd operator()(const Eigen::MatrixXd& raw) const {
    Eigen::VectorXd out(raw.rows());
    for (const auto& block : blocks) {
      if (block.offset >= raw.rows()) break;
      Eigen::Index rows = std::min(block.rows, raw.rows() - block.offset);
      Eigen::MatrixXd X = raw.middleRows(block.offset, rows);
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        X.col(c) = (X.col(c).array() - block.stats->mean[c]) / block.stats->std[c];
      }
      if (block.linear) {
        out.segment(block.offset, rows) = predict_linear(*block.linear, X);
      } else {
        MLPNetwork net = *block.mlp;  // inference leaves the net untouched
        out.segment(block.offset, rows) = forward(net, X, false).col(0);
      }
    }
    return out;
  }
};

}  // namespace

void stage_importance(const RunConfig& config, std::ostream& log) {
  check_stamp(config, "importance");
  PipelineData data = prepare_inputs(config);
  const std::string hash = config_hash(config);
  const Eigen::Index T_oos = data.oos.length();
  const Eigen::Index P = data.factors.cols();

  // Per-iteration standardization stats and the raw imputed OOS factor matrix.
  std::vector<StandardizeStats> stats;
  Eigen::MatrixXd raw_oos(T_oos, P);
  for (const auto& it : data.plan.iterations) {
    auto [std_panel, iter_stats] = impute_and_standardize(data.factors, it.train);
    stats.push_back(iter_stats);
    Eigen::MatrixXd block = data.factors.slice(it.predict);
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        if (Panel::is_missing(block(r, c))) block(r, c) = iter_stats.mean[c];
      }
    }
    raw_oos.middleRows(it.predict.start.index - data.oos.start.index, block.rows()) = block;
  }

  const int top_k = std::min<int>(config.importance_top_k, static_cast<int>(P));
  for (const auto& name : config.roster) {
    ModelSpec spec = resolve_model(name, config);
    // Reload every per-(stock, iteration) model from its parameter file.
    std::vector<std::vector<LinearModel>> linear_models;
    std::vector<std::vector<MLPNetwork>> mlp_models;
    linear_models.resize(data.returns.cols());
    mlp_models.resize(data.returns.cols());
    for (Eigen::Index s = 0; s < data.returns.cols(); ++s) {
      for (std::size_t i = 0; i < data.plan.iterations.size(); ++i) {
        fs::path path = config.out_dir / "params" /
                        params_filename(data.returns.columns()[s],
                                        static_cast<int>(i) + 1, name);
        if (spec.is_mlp) {
          mlp_models[s].push_back(load_network(path, hash));
        } else {
          linear_models[s].push_back(load_linear(path, hash));
        }
      }
    }

    for (const auto& period : config.periods) {
      Eigen::Index T_cut = 0;
      while (T_cut < T_oos && data.oos.start.plus(static_cast<int>(T_cut)) <= period.test_end) {
        ++T_cut;
      }
      Eigen::MatrixXd raw_cut = raw_oos.topRows(T_cut);
      Eigen::MatrixXd realized = data.returns.slice(DateRange{
          data.oos.start, data.oos.start.plus(static_cast<int>(T_cut) - 1)});

      std::vector<double> importance_sum(static_cast<std::size_t>(P), 0.0);
      for (Eigen::Index s = 0; s < data.returns.cols(); ++s) {
        StitchedPredictor predictor;
        for (std::size_t i = 0; i < data.plan.iterations.size(); ++i) {
          const auto& it = data.plan.iterations[i];
          StitchedPredictor::Block block;
          block.offset = it.predict.start.index - data.oos.start.index;
          block.rows = it.predict.length();
          block.stats = &stats[i];
          block.linear = spec.is_mlp ? nullptr : &linear_models[s][i];
          block.mlp = spec.is_mlp ? &mlp_models[s][i] : nullptr;
          predictor.blocks.push_back(block);
        }
        BatchPredictor fn = [&predictor](const Eigen::MatrixXd& X) { return predictor(X); };
        std::uint64_t seed = mix_seed(config.seed, fnv1a(name),
                                      static_cast<std::uint64_t>(s), 0x494d50ULL);
        for (Eigen::Index j = 0; j < P; ++j) {
          importance_sum[static_cast<std::size_t>(j)] += permutation_importance(
              fn, raw_cut, realized.col(s), j, seed, config.importance_repeats);
        }
      }

      std::vector<RankedFeature> features;
      for (Eigen::Index j = 0; j < P; ++j) {
        features.push_back({data.factors.columns()[j],
                            importance_sum[static_cast<std::size_t>(j)] /
                                static_cast<double>(data.returns.cols())});
      }
      auto ranked = importance_ranking(features, static_cast<std::size_t>(top_k));
      CsvTable table;
      table.header = {"feature", "importance", "rank"};
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        table.rows.push_back({ranked[r].name, format_double(ranked[r].importance),
                              std::to_string(r + 1)});
      }
      write_csv(config.out_dir / ("importance_" + name + "_" + period.label + ".csv"), table);
    }
  }
  log << "importance: per-model rankings for " << config.periods.size() << " period(s)\n";
}

void stage_backtest(const RunConfig& config, std::ostream& log) {
  check_stamp(config, "backtest");
  PipelineData data = prepare_inputs(config);

  for (const auto& period : config.periods) {
    for (Weighting weighting : config.weightings) {
      const Panel* caps = weighting == Weighting::value ? &data.marketcap : nullptr;
      std::vector<std::pair<std::string, Eigen::VectorXd>> cumret_columns;
      std::vector<Month> months;

      auto emit = [&](const std::string& model_name, const PortfolioSeries& series) {
        CsvTable table;
        table.header = {"month", "gross", "cost", "net", "cum_wealth"};
        Eigen::VectorXd wealth = cumulative_wealth(series.net);
        for (Eigen::Index t = 0; t < series.net.size(); ++t) {
          table.rows.push_back({months[static_cast<std::size_t>(t)].str(),
                                format_double(series.gross(t)), format_double(series.cost(t)),
                                format_double(series.net(t)), format_double(wealth(t))});
        }
        write_csv(config.out_dir / ("backtest_" + model_name + "_" + to_string(weighting) +
                                    "_" + period.label + ".csv"),
                  table);
        cumret_columns.emplace_back(model_name, (wealth.array() - 1.0).matrix());
      };

      for (const auto& name : config.roster) {
        PredictionSet set =
            load_prediction_set(config, data, name).truncated(period.test_end);
        if (months.empty()) months = set.months;
        BacktestLedger ledger = generate_signals(set, SignalRule{});
        apply_costs(ledger, config.cost_bp, config.cost_mode);
        emit(name, aggregate_portfolio(ledger, weighting, caps));
      }

      // Always-long benchmark, no prediction, no costs.
      PredictionSet any =
          load_prediction_set(config, data, config.roster.front()).truncated(period.test_end);
      PortfolioSeries bh;
      bh.net = buy_and_hold(any, weighting, caps);
      bh.gross = bh.net;
      bh.cost = Eigen::VectorXd::Zero(bh.net.size());
      emit("buy_and_hold", bh);

      CsvTable cumret;
      cumret.header = {"month"};
      for (const auto& [name, values] : cumret_columns) cumret.header.push_back(name);
      for (std::size_t t = 0; t < months.size(); ++t) {
        std::vector<std::string> row{months[t].str()};
        for (const auto& [name, values] : cumret_columns) {
          row.push_back(format_double(values(static_cast<Eigen::Index>(t))));
        }
        cumret.rows.push_back(std::move(row));
      }
      write_csv(config.out_dir /
                    ("cumret_" + to_string(weighting) + "_" + period.label + ".csv"),
                cumret);
      write_svg_chart(config.out_dir /
                          ("cumret_" + to_string(weighting) + "_" + period.label + ".svg"),
                      months, cumret_columns,
                      "Cumulative excess returns (" + to_string(weighting) + ", " +
                          period.label + ")");
    }
  }
  log << "backtest: ledgers, cumulative returns, and charts written\n";
}

void stage_report(const RunConfig& config, std::ostream& log) {
  check_stamp(config, "report");
  PipelineData data = prepare_inputs(config);

  CsvTable table;
  table.header = {"model", "weighting", "period", "annual_return", "std",
                  "sharpe", "sortino", "mdd", "alpha", "alpha_t"};

  auto metric_cell = [](auto compute) -> std::string {
    try {
      return format_double(compute());
    } catch (const Error&) {
      return "";  // undefined metric for this series
    }
  };

  for (const auto& period : config.periods) {
    for (Weighting weighting : config.weightings) {
      const Panel* caps = weighting == Weighting::value ? &data.marketcap : nullptr;

      auto emit_row = [&](const std::string& model_name, const Eigen::VectorXd& net,
                          const PredictionSet* set) {
        std::vector<std::string> row{model_name, to_string(weighting), period.label};
        row.push_back(metric_cell([&] { return annualized_return(net); }));
        double mean = net.mean();
        double ss = (net.array() - mean).square().sum();
        row.push_back(format_double(std::sqrt(ss / static_cast<double>(net.size() - 1))));
        row.push_back(metric_cell([&] { return sharpe(net); }));
        row.push_back(metric_cell([&] { return sortino(net); }));
        row.push_back(metric_cell([&] { return max_drawdown(net); }));
        if (set) {
          // Alpha is weighting-invariant; the same value appears for both.
          double alpha = (set->realized.colwise().mean() - set->predicted.colwise().mean()).mean();
          row.push_back(format_double(alpha));
          row.push_back(metric_cell([&] { return jensens_alpha(*set).t_stat; }));
        } else {
          row.push_back("");
          row.push_back("");
        }
        table.rows.push_back(std::move(row));
      };

      for (const auto& name : config.roster) {
        PredictionSet set =
            load_prediction_set(config, data, name).truncated(period.test_end);
        BacktestLedger ledger = generate_signals(set, SignalRule{});
        apply_costs(ledger, config.cost_bp, config.cost_mode);
        emit_row(name, portfolio_returns(ledger, weighting, caps), &set);
      }
      PredictionSet any =
          load_prediction_set(config, data, config.roster.front()).truncated(period.test_end);
      emit_row("buy_and_hold", buy_and_hold(any, weighting, caps), nullptr);
    }
  }
  write_csv(config.out_dir / "report.csv", table);
  log << "report: report.csv (" << table.rows.size() << " rows)\n";
}

void run_pipeline(const RunConfig& config, std::ostream& log) {
  fs::create_directories(config.out_dir);
  {
    std::ofstream marker(config.out_dir / "INCOMPLETE");
    marker << "run in progress\n";
  }

  using Clock = std::chrono::steady_clock;
  nlohmann::ordered_json stage_times = nlohmann::ordered_json::array();

  auto timed = [&](const char* name, auto&& fn) {
    auto start = Clock::now();
    try {
      fn();
    } catch (const Error& e) {
      throw Error("stage " + std::string(name) + ": " + e.what());
    }
    double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    stage_times.push_back({{"stage", name}, {"seconds", seconds}});
    log << "  [" << name << "] done in " << format_double(seconds) << "s\n";
  };

  timed("split", [&] { stage_split(config, log); });
  timed("train", [&] { stage_train(config, TrainFilter{}, log); });
  timed("evaluate", [&] { stage_evaluate(config, log); });
  timed("dm", [&] { stage_dm(config, log); });
  timed("importance", [&] { stage_importance(config, log); });
  timed("backtest", [&] { stage_backtest(config, log); });
  timed("report", [&] { stage_report(config, log); });

  PipelineData data = prepare_inputs(config);
  nlohmann::ordered_json manifest;
  manifest["config_hash"] = config_hash(config);
  manifest["seed"] = config.seed;
  manifest["stocks"] = data.returns.cols();
  manifest["factors"] = data.factors.cols();
  manifest["iterations"] = data.plan.iterations.size();
  manifest["oos_months"] = data.oos.length();
  manifest["models"] = config.roster;
  nlohmann::ordered_json periods = nlohmann::ordered_json::array();
  for (const auto& p : config.periods) {
    periods.push_back({{"label", p.label}, {"test_end", p.test_end.str()}});
  }
  manifest["periods"] = periods;
  manifest["stage_seconds"] = stage_times;
  {
    std::ofstream out(config.out_dir / "run.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
  }
  fs::remove(config.out_dir / "INCOMPLETE");
  log << "run complete: artifacts under " << config.out_dir.string() << "\n";
}

}  // namespace fap
