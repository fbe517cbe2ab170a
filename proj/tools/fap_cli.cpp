// Batch driver: synthetic data generation, panel checks, extending-window
// training, evaluation, and backtesting, wired from a sectioned config file.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "fap/config.hpp"
#include "fap/errors.hpp"
#include "fap/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> periods;
  long jobs = -1;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_seed_jobs = true) {
  cmd->add_option("--config", opts.config_path, "Path to the run config file")->required();
  cmd->add_option("--out", opts.out_dir, "Output directory (overrides [run] out)");
  cmd->add_option("--period", opts.periods,
                  "Period label(s) to evaluate (default: all configured)");
  if (with_seed_jobs) {
    cmd->add_option("--jobs", opts.jobs, "Worker threads for training");
    cmd->add_option("--seed", opts.seed, "Global seed (overrides [run] seed)");
  }
}

fap::RunConfig make_config(const CommonOptions& opts) {
  fap::RunConfig config = fap::load_config(opts.config_path);
  if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  if (opts.jobs > 0) config.jobs = static_cast<int>(opts.jobs);
  if (opts.seed >= 0) {
    config.seed = static_cast<std::uint64_t>(opts.seed);
    config.train.seed = config.seed;
  }
  if (!opts.periods.empty()) {
    std::vector<fap::PeriodSpec> selected;
    for (const auto& label : opts.periods) {
      bool found = false;
      for (const auto& p : config.periods) {
        if (p.label == label) {
          selected.push_back(p);
          found = true;
        }
      }
      if (!found) throw fap::ConfigError("period '" + label + "' is not configured");
    }
    config.periods = selected;
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factor asset pricing research pipeline"};
  app.require_subcommand(1);

  CommonOptions run_opts, synth_opts, ingest_opts, split_opts, train_opts, eval_opts,
      dm_opts, imp_opts, back_opts, report_opts;
  std::vector<std::string> train_models;
  std::string train_stocks;

  CLI::App* run_cmd = app.add_subcommand("run", "Execute the full workflow");
  add_common(run_cmd, run_opts);

  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate synthetic input CSVs");
  add_common(synth_cmd, synth_opts);

  CLI::App* ingest_cmd = app.add_subcommand("ingest-check", "Validate and summarize the inputs");
  add_common(ingest_cmd, ingest_opts, false);

  CLI::App* split_cmd = app.add_subcommand("split", "Write the extending-window plan");
  add_common(split_cmd, split_opts, false);

  CLI::App* train_cmd = app.add_subcommand("train", "Fit every (stock, window, model) task");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--model", train_models, "Restrict to these roster models");
  train_cmd->add_option("--stocks", train_stocks, "Comma-separated stock subset");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "OOS fit metrics per stock and model");
  add_common(eval_cmd, eval_opts, false);

  CLI::App* dm_cmd = app.add_subcommand("dm", "Pairwise Diebold-Mariano comparisons");
  add_common(dm_cmd, dm_opts, false);

  CLI::App* imp_cmd = app.add_subcommand("importance", "Permutation feature importance");
  add_common(imp_cmd, imp_opts, false);

  CLI::App* back_cmd = app.add_subcommand("backtest", "Sign-agreement strategy simulation");
  add_common(back_cmd, back_opts, false);

  CLI::App* report_cmd = app.add_subcommand("report", "Portfolio performance report");
  add_common(report_cmd, report_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      fap::run_pipeline(make_config(run_opts), std::cout);
    } else if (synth_cmd->parsed()) {
      fap::stage_synth(make_config(synth_opts), std::cout);
    } else if (ingest_cmd->parsed()) {
      fap::stage_ingest_check(make_config(ingest_opts), std::cout);
    } else if (split_cmd->parsed()) {
      fap::stage_split(make_config(split_opts), std::cout);
    } else if (train_cmd->parsed()) {
      fap::TrainFilter filter;
      filter.models = train_models;
      if (!train_stocks.empty()) {
        std::size_t start = 0;
        while (start <= train_stocks.size()) {
          std::size_t pos = train_stocks.find(',', start);
          std::string item = pos == std::string::npos ? train_stocks.substr(start)
                                                      : train_stocks.substr(start, pos - start);
          if (!item.empty()) filter.stocks.push_back(item);
          if (pos == std::string::npos) break;
          start = pos + 1;
        }
      }
      fap::stage_train(make_config(train_opts), filter, std::cout);
    } else if (eval_cmd->parsed()) {
      fap::stage_evaluate(make_config(eval_opts), std::cout);
    } else if (dm_cmd->parsed()) {
      fap::stage_dm(make_config(dm_opts), std::cout);
    } else if (imp_cmd->parsed()) {
      fap::stage_importance(make_config(imp_opts), std::cout);
    } else if (back_cmd->parsed()) {
      fap::stage_backtest(make_config(back_opts), std::cout);
    } else if (report_cmd->parsed()) {
      fap::stage_report(make_config(report_opts), std::cout);
    }
  } catch (const fap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
