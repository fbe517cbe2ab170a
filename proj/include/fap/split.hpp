#pragma once

#include <filesystem>
#include <vector>

#include "fap/month.hpp"

namespace fap {

struct SplitIteration {
  int index = 0;  // 1-based
  DateRange train;
  DateRange validation;
  DateRange predict;
};

// Extending-window schedule: training grows by `step_months` per iteration,
// the validation window keeps a fixed length and shifts along with it, and
// the prediction windows tile the test range exactly once.
struct SplitPlan {
  std::vector<SplitIteration> iterations;
  int step_months = 12;
  int val_len_months = 119;

  DateRange test_range() const {
    return DateRange{iterations.front().predict.start, iterations.back().predict.end};
  }
  int total_predict_months() const {
    return test_range().length();
  }
};

SplitPlan build_split_plan(Month train_start, Month initial_train_end,
                           int val_len, int step, Month test_end);

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split_plan(const std::filesystem::path& path);

}  // namespace fap
