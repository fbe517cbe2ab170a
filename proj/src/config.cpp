#include "fap/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "fap/csv.hpp"
#include "fap/errors.hpp"

namespace fap {

Month RunConfig::max_test_end() const {
  if (periods.empty()) throw ConfigError("no evaluation periods configured");
  Month latest = periods.front().test_end;
  for (const auto& p : periods) latest = std::max(latest, p.test_end);
  return latest;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

struct RawConfig {
  // section -> ordered (key, value) pairs
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  const std::vector<std::pair<std::string, std::string>>* find(const std::string& name) const {
    for (const auto& [section, entries] : sections) {
      if (section == name) return &entries;
    }
    return nullptr;
  }
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  auto entries_of = [&](const std::string& name)
      -> std::vector<std::pair<std::string, std::string>>& {
    for (auto& [section, entries] : raw.sections) {
      if (section == name) return entries;
    }
    raw.sections.emplace_back(name, std::vector<std::pair<std::string, std::string>>{});
    return raw.sections.back().second;
  };

  std::istringstream in(text);
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      entries_of(section);  // repeated sections merge
      continue;
    }
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    entries_of(section).emplace_back(trim(stripped.substr(0, eq)),
                                     trim(stripped.substr(eq + 1)));
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(const RawConfig& raw, const std::string& name) : name_(name) {
    if (const auto* entries = raw.find(name)) {
      for (const auto& [k, v] : *entries) entries_.emplace_back(k, v);
    }
  }

  bool has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const auto& kv) { return kv.first == key; });
  }

  // Last occurrence wins, so a key can be overridden later in the file.
  std::string get(const std::string& key, const std::string& fallback) {
    consumed_.push_back(key);
    std::string value = fallback;
    for (const auto& [k, v] : entries_) {
      if (k == key) value = v;
    }
    return value;
  }

  std::string require(const std::string& key) {
    if (!has(key)) throw ConfigError("missing required config key [" + name_ + "] " + key);
    return get(key, "");
  }

  double get_double(const std::string& key, double fallback) {
    std::string text = get(key, format_double(fallback));
    double value;
    if (!parse_double(text, value)) {
      throw ConfigError("bad number for [" + name_ + "] " + key + ": '" + text + "'");
    }
    return value;
  }

  long get_long(const std::string& key, long fallback) {
    std::string text = get(key, std::to_string(fallback));
    try {
      std::size_t pos;
      long value = std::stol(text, &pos);
      if (pos != text.size()) throw std::invalid_argument("trailing");
      return value;
    } catch (const std::exception&) {
      throw ConfigError("bad integer for [" + name_ + "] " + key + ": '" + text + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    std::string text = get(key, fallback ? "true" : "false");
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("bad boolean for [" + name_ + "] " + key + ": '" + text + "'");
  }

  void reject_unknown() const {
    for (const auto& [k, v] : entries_) {
      if (std::find(consumed_.begin(), consumed_.end(), k) == consumed_.end()) {
        throw ConfigError("unknown config key [" + name_ + "] " + k);
      }
    }
  }

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> consumed_;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find(',', start);
    std::string item = trim(pos == std::string::npos ? text.substr(start)
                                                     : text.substr(start, pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

const std::vector<std::string> kKnownModels = {
    "ols", "pls", "pcr", "fw1", "fw2", "fw3", "fw4", "fw5",
    "gkx_fw1", "gkx_fw2", "gkx_fw3", "gkx_fw4", "gkx_fw5"};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RawConfig raw = tokenize(text);
  RunConfig config;

  SectionReader data(raw, "data");
  config.returns_path = data.get("returns", "returns.csv");
  config.factors_path = data.get("factors", "factors.csv");
  config.marketcap_path = data.get("marketcap", "marketcap.csv");
  config.riskfree_path = data.get("riskfree", "riskfree.csv");
  data.reject_unknown();

  SectionReader split(raw, "split");
  config.train_start = Month::parse(split.require("train_start"));
  config.initial_train_end = Month::parse(split.require("initial_train_end"));
  config.val_len = static_cast<int>(split.get_long("val_len", 119));
  config.step = static_cast<int>(split.get_long("step", 12));
  split.reject_unknown();

  if (const auto* periods = raw.find("periods")) {
    for (const auto& [label, value] : *periods) {
      config.periods.push_back({label, Month::parse(value)});
    }
  }
  if (config.periods.empty()) throw ConfigError("[periods] must list at least one label = YYYY-MM");

  SectionReader models(raw, "models");
  config.roster = split_list(models.get("roster", "ols,pls,pcr,fw1,fw2,fw3,fw4,fw5"));
  if (config.roster.empty()) throw ConfigError("[models] roster is empty");
  for (const auto& name : config.roster) {
    if (std::find(kKnownModels.begin(), kKnownModels.end(), name) == kKnownModels.end()) {
      throw ConfigError("unknown model '" + name + "' in roster");
    }
  }
  {
    std::string mode = models.get("pyramid_mode", "formula");
    if (mode == "formula") config.pyramid_mode = PyramidMode::formula;
    else if (mode == "fixed_main") config.pyramid_mode = PyramidMode::fixed_main;
    else throw ConfigError("pyramid_mode must be formula or fixed_main");
    std::string rounding = models.get("rounding", "floor");
    if (rounding == "floor") config.rounding = Rounding::floor;
    else if (rounding == "round_half_up") config.rounding = Rounding::round_half_up;
    else if (rounding == "ceil") config.rounding = Rounding::ceil;
    else throw ConfigError("rounding must be floor, round_half_up, or ceil");
  }
  config.variance_threshold = models.get_double("variance_threshold", 0.95);
  config.batch_norm = models.get_bool("batch_norm", true);
  models.reject_unknown();

  SectionReader train(raw, "train");
  config.train.learning_rate = train.get_double("learning_rate", 0.001);
  config.train.beta1 = train.get_double("beta1", 0.9);
  config.train.beta2 = train.get_double("beta2", 0.999);
  config.train.epsilon = train.get_double("epsilon", 1e-8);
  config.train.lambda = train.get_double("lambda", 1e-4);
  config.train.batch_size = static_cast<int>(train.get_long("batch_size", 32));
  config.train.max_epochs = static_cast<int>(train.get_long("max_epochs", 200));
  config.train.patience = static_cast<int>(train.get_long("patience", 10));
  config.train.batchnorm_momentum = train.get_double("batchnorm_momentum", 0.9);
  train.reject_unknown();

  SectionReader filter(raw, "filter");
  config.filter.max_train_missing_frac = filter.get_double("max_train_missing_frac", 0.5);
  config.filter.test_missing_allowed = filter.get_bool("test_missing_allowed", false);
  config.filter.min_factor_train_avail_frac =
      filter.get_double("min_factor_train_avail_frac", 0.6);
  filter.reject_unknown();

  SectionReader backtest(raw, "backtest");
  config.cost_bp = backtest.get_double("cost_bp", 50.0);
  {
    std::string mode = backtest.get("tc_mode", "per_trade");
    if (mode == "per_trade") config.cost_mode = CostMode::per_trade;
    else if (mode == "literal") config.cost_mode = CostMode::literal;
    else throw ConfigError("tc_mode must be per_trade or literal");
  }
  {
    config.weightings.clear();
    for (const auto& w : split_list(backtest.get("weightings", "equal,value"))) {
      if (w == "equal") config.weightings.push_back(Weighting::equal);
      else if (w == "value") config.weightings.push_back(Weighting::value);
      else throw ConfigError("unknown weighting '" + w + "'");
    }
    if (config.weightings.empty()) throw ConfigError("[backtest] weightings is empty");
  }
  backtest.reject_unknown();

  SectionReader evaluation(raw, "evaluation");
  config.importance_repeats = static_cast<int>(evaluation.get_long("importance_repeats", 10));
  config.importance_top_k = static_cast<int>(evaluation.get_long("importance_top_k", 20));
  config.dm_hac = evaluation.get_bool("dm_hac", false);
  evaluation.reject_unknown();

  SectionReader run(raw, "run");
  config.seed = static_cast<std::uint64_t>(run.get_long("seed", 42));
  config.out_dir = run.get("out", "out");
  config.jobs = static_cast<int>(run.get_long("jobs", 1));
  run.reject_unknown();

  if (raw.find("synth")) {
    SectionReader synth(raw, "synth");
    config.has_synth = true;
    config.synth.n_stocks = static_cast<int>(synth.get_long("n_stocks", 20));
    config.synth.n_factors = static_cast<int>(synth.get_long("n_factors", 10));
    config.synth.n_months = static_cast<int>(synth.get_long("n_months", 300));
    config.synth.noise_std = synth.get_double("noise_std", 0.02);
    {
      std::string kind = synth.get("nonlinearity", "none");
      if (kind == "none") config.synth.nonlinearity = Nonlinearity::none;
      else if (kind == "relu_mixture") config.synth.nonlinearity = Nonlinearity::relu_mixture;
      else throw ConfigError("nonlinearity must be none or relu_mixture");
    }
    config.synth.missing_frac = synth.get_double("missing_frac", 0.0);
    config.synth.seed = static_cast<std::uint64_t>(
        synth.get_long("seed", static_cast<long>(config.seed)));
    config.synth.start = Month::parse(synth.get("start", "1990-01"));
    config.synth.protected_tail_months =
        static_cast<int>(synth.get_long("protected_tail_months", config.synth.n_months / 4));
    config.synth.riskfree_rate = synth.get_double("riskfree_rate", 0.002);
    synth.reject_unknown();
  }

  config.train.seed = config.seed;
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string canonical_config_string(const RunConfig& c) {
  std::ostringstream out;
  out << "data.returns=" << c.returns_path.string() << '\n';
  out << "data.factors=" << c.factors_path.string() << '\n';
  out << "data.marketcap=" << c.marketcap_path.string() << '\n';
  out << "data.riskfree=" << c.riskfree_path.string() << '\n';
  out << "split.train_start=" << c.train_start.str() << '\n';
  out << "split.initial_train_end=" << c.initial_train_end.str() << '\n';
  out << "split.val_len=" << c.val_len << '\n';
  out << "split.step=" << c.step << '\n';
  for (const auto& p : c.periods) {
    out << "periods." << p.label << '=' << p.test_end.str() << '\n';
  }
  out << "models.roster=";
  for (std::size_t i = 0; i < c.roster.size(); ++i) out << (i ? "," : "") << c.roster[i];
  out << '\n';
  out << "models.pyramid_mode=" << static_cast<int>(c.pyramid_mode) << '\n';
  out << "models.rounding=" << static_cast<int>(c.rounding) << '\n';
  out << "models.variance_threshold=" << format_double(c.variance_threshold) << '\n';
  out << "models.batch_norm=" << c.batch_norm << '\n';
  out << "train.learning_rate=" << format_double(c.train.learning_rate) << '\n';
  out << "train.beta1=" << format_double(c.train.beta1) << '\n';
  out << "train.beta2=" << format_double(c.train.beta2) << '\n';
  out << "train.epsilon=" << format_double(c.train.epsilon) << '\n';
  out << "train.lambda=" << format_double(c.train.lambda) << '\n';
  out << "train.batch_size=" << c.train.batch_size << '\n';
  out << "train.max_epochs=" << c.train.max_epochs << '\n';
  out << "train.patience=" << c.train.patience << '\n';
  out << "train.batchnorm_momentum=" << format_double(c.train.batchnorm_momentum) << '\n';
  out << "filter.max_train_missing_frac=" << format_double(c.filter.max_train_missing_frac) << '\n';
  out << "filter.test_missing_allowed=" << c.filter.test_missing_allowed << '\n';
  out << "filter.min_factor_train_avail_frac="
      << format_double(c.filter.min_factor_train_avail_frac) << '\n';
  out << "backtest.cost_bp=" << format_double(c.cost_bp) << '\n';
  out << "backtest.tc_mode=" << static_cast<int>(c.cost_mode) << '\n';
  out << "backtest.weightings=";
  for (std::size_t i = 0; i < c.weightings.size(); ++i) {
    out << (i ? "," : "") << to_string(c.weightings[i]);
  }
  out << '\n';
  out << "evaluation.importance_repeats=" << c.importance_repeats << '\n';
  out << "evaluation.importance_top_k=" << c.importance_top_k << '\n';
  out << "evaluation.dm_hac=" << c.dm_hac << '\n';
  out << "run.seed=" << c.seed << '\n';
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t hash = fnv1a(canonical_config_string(config));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace fap
