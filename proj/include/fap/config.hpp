#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fap/backtest.hpp"
#include "fap/mlp.hpp"
#include "fap/month.hpp"
#include "fap/panel.hpp"
#include "fap/synthetic.hpp"

namespace fap {

struct PeriodSpec {
  std::string label;
  Month test_end;
};

// Everything the batch driver needs, read from a sectioned key=value file.
// All hyperparameters live here so no modeling choice is hard-coded.
struct RunConfig {
  // [data]
  std::filesystem::path returns_path = "returns.csv";
  std::filesystem::path factors_path = "factors.csv";
  std::filesystem::path marketcap_path = "marketcap.csv";
  std::filesystem::path riskfree_path = "riskfree.csv";

  // [split]
  Month train_start;
  Month initial_train_end;
  int val_len = 119;
  int step = 12;

  // [periods] label = test_end, in file order
  std::vector<PeriodSpec> periods;

  // [models]
  std::vector<std::string> roster;  // ols | pls | pcr | fw1..fw5 | gkx_fw3..gkx_fw5
  PyramidMode pyramid_mode = PyramidMode::formula;  // for the fw family
  Rounding rounding = Rounding::floor;
  double variance_threshold = 0.95;
  bool batch_norm = true;

  // [train]
  TrainConfig train;

  // [filter]
  UniverseFilterSpec filter;

  // [backtest]
  double cost_bp = 50.0;
  CostMode cost_mode = CostMode::per_trade;
  std::vector<Weighting> weightings = {Weighting::equal, Weighting::value};

  // [evaluation]
  int importance_repeats = 10;
  int importance_top_k = 20;
  bool dm_hac = false;

  // [run]
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "out";
  int jobs = 1;

  // [synth] (optional, used by the synth subcommand)
  SyntheticSpec synth;
  bool has_synth = false;

  Month max_test_end() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical rendering of every semantically meaningful field
// (output dir and job count excluded).
std::string config_hash(const RunConfig& config);
std::string canonical_config_string(const RunConfig& config);

std::uint64_t fnv1a(const std::string& text);

}  // namespace fap
