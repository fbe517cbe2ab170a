#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "fap/config.hpp"
#include "fap/evaluation.hpp"
#include "fap/linear.hpp"
#include "fap/mlp.hpp"
#include "fap/panel.hpp"
#include "fap/split.hpp"

namespace fap {

// Inputs after ingest, excess-return construction, availability filtering,
// and split planning; shared by every stage.
struct PipelineData {
  Panel returns;     // filtered universe, excess returns
  Panel factors;     // filtered factor set
  Panel marketcap;
  SplitPlan plan;    // built for the latest configured test end
  DateRange initial_train;
  DateRange oos;
  Eigen::VectorXd train_mean;  // per stock, observed mean over initial_train
};

PipelineData prepare_inputs(const RunConfig& config);

struct ModelSpec {
  std::string name;
  bool is_mlp = false;
  int depth = 0;
  PyramidMode mode = PyramidMode::formula;
  LinearKind linear_kind = LinearKind::ols;
};

ModelSpec resolve_model(const std::string& name, const RunConfig& config);

struct TrainFilter {
  std::vector<std::string> models;  // empty = full roster
  std::vector<std::string> stocks;  // empty = full universe
};

// Stage entry points. Each writes artifacts under config.out_dir; stages that
// consume earlier artifacts verify the config stamp first.
void stage_synth(const RunConfig& config, std::ostream& log);
void stage_ingest_check(const RunConfig& config, std::ostream& log);
void stage_split(const RunConfig& config, std::ostream& log);
void stage_train(const RunConfig& config, const TrainFilter& filter, std::ostream& log);
void stage_evaluate(const RunConfig& config, std::ostream& log);
void stage_dm(const RunConfig& config, std::ostream& log);
void stage_importance(const RunConfig& config, std::ostream& log);
void stage_backtest(const RunConfig& config, std::ostream& log);
void stage_report(const RunConfig& config, std::ostream& log);

// Full workflow: split, train, evaluate, dm, importance, backtest, report,
// then the run manifest. Any stage error aborts with the stage named and the
// output directory marked incomplete.
void run_pipeline(const RunConfig& config, std::ostream& log);

// Loads the prediction matrix written by stage_train for one model.
PredictionSet load_prediction_set(const RunConfig& config, const PipelineData& data,
                                  const std::string& model_name);

}  // namespace fap
