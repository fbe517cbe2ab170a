#include "fap/split.hpp"

#include <algorithm>

#include "fap/csv.hpp"
#include "fap/errors.hpp"

namespace fap {

SplitPlan build_split_plan(Month train_start, Month initial_train_end,
                           int val_len, int step, Month test_end) {
  if (initial_train_end <= train_start) {
    throw PlanError("initial train end must come after train start");
  }
  if (val_len < 1) throw PlanError("validation length must be >= 1 month");
  if (step < 1) throw PlanError("step must be >= 1 month");

  const Month first_predict = initial_train_end.plus(val_len + 1);
  if (test_end < first_predict) {
    throw PlanError("test range shorter than one month: first prediction month " +
                    first_predict.str() + " is past test end " + test_end.str());
  }

  SplitPlan plan;
  plan.step_months = step;
  plan.val_len_months = val_len;
  for (int i = 0;; ++i) {
    SplitIteration it;
    it.index = i + 1;
    it.train = DateRange{train_start, initial_train_end.plus(i * step)};
    it.validation = DateRange{it.train.end.plus(1), it.train.end.plus(val_len)};
    Month pred_start = it.validation.end.plus(1);
    if (test_end < pred_start) break;
    it.predict = DateRange{pred_start, std::min(pred_start.plus(step - 1), test_end)};
    plan.iterations.push_back(it);
  }
  return plan;
}

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
  CsvTable table;
  table.header = {"index", "train_start", "train_end", "val_start",
                  "val_end", "pred_start", "pred_end"};
  for (const auto& it : plan.iterations) {
    table.rows.push_back({std::to_string(it.index), it.train.start.str(),
                          it.train.end.str(), it.validation.start.str(),
                          it.validation.end.str(), it.predict.start.str(),
                          it.predict.end.str()});
  }
  write_csv(path, table);
}

SplitPlan load_split_plan(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"index", "train_start", "train_end",
                                               "val_start", "val_end", "pred_start",
                                               "pred_end"}) {
    throw SchemaError(path.string() + ": unexpected split plan header");
  }
  SplitPlan plan;
  for (const auto& row : table.rows) {
    if (row.size() != 7) throw ParseError(path.string() + ": wrong cell count in split row");
    SplitIteration it;
    it.index = std::stoi(row[0]);
    it.train = DateRange{Month::parse(row[1]), Month::parse(row[2])};
    it.validation = DateRange{Month::parse(row[3]), Month::parse(row[4])};
    it.predict = DateRange{Month::parse(row[5]), Month::parse(row[6])};
    plan.iterations.push_back(it);
  }
  if (plan.iterations.empty()) throw PlanError(path.string() + ": empty split plan");
  plan.val_len_months = plan.iterations.front().validation.length();
  plan.step_months = plan.iterations.size() > 1
                         ? plan.iterations[1].train.end.index - plan.iterations[0].train.end.index
                         : plan.iterations.front().predict.length();
  return plan;
}

}  // namespace fap
