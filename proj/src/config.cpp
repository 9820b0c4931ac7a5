#include "depo/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace depo {

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::string msg = "invalid configuration:";
  for (const auto& v : violations) {
    msg += "\n  - " + v;
  }
  return msg;
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) items.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string t = trim(cur);
  if (!t.empty()) items.push_back(t);
  return items;
}

class Parser {
 public:
  explicit Parser(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t comment = line.find_first_of("#;");
      if (comment != std::string::npos) line = line.substr(0, comment);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          violations.push_back("line " + std::to_string(lineno) + ": malformed section header '" +
                               line + "'");
          continue;
        }
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        violations.push_back("line " + std::to_string(lineno) + ": expected key = value, got '" +
                             line + "'");
        continue;
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        violations.push_back("line " + std::to_string(lineno) + ": empty key");
        continue;
      }
      values_[section + "." + key] = value;
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void take_int(const std::string& key, int& out, long lo, long hi, const std::string& constraint) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      if (v < lo || v > hi) {
        violations.push_back(key + ": must be " + constraint + " (got " + it->second + ")");
        return;
      }
      out = static_cast<int>(v);
    } catch (const std::exception&) {
      violations.push_back(key + ": not an integer (got '" + it->second + "')");
    }
  }

  void take_u64(const std::string& key, std::uint64_t& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      out = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      violations.push_back(key + ": not an unsigned integer (got '" + it->second + "')");
    }
  }

  void take_double(const std::string& key, double& out, bool positive, bool allow_zero,
                   const std::string& constraint) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      if (positive && !(v > 0.0) && !(allow_zero && v == 0.0)) {
        violations.push_back(key + ": must be " + constraint + " (got " + it->second + ")");
        return;
      }
      out = v;
    } catch (const std::exception&) {
      violations.push_back(key + ": not a number (got '" + it->second + "')");
    }
  }

  void take_bool(const std::string& key, bool& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(it->first);
    if (it->second == "true" || it->second == "1") out = true;
    else if (it->second == "false" || it->second == "0") out = false;
    else violations.push_back(key + ": must be true or false (got '" + it->second + "')");
  }

  void take_string(const std::string& key, std::string& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(it->first);
    out = it->second;
  }

  void report_unknown() {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key)) {
        violations.push_back(key + ": unknown key");
      }
    }
  }

  std::vector<std::string> violations;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations_in)
    : std::runtime_error(join_violations(violations_in)), violations(std::move(violations_in)) {}

double resolved_alpha(const TrainConfigSection& train) {
  if (train.alpha_sqrt_T) {
    return std::ceil(std::sqrt(static_cast<double>(train.T)));
  }
  return train.alpha;
}

ExperimentConfig parse_config_text(const std::string& text) {
  Parser parser(text);
  ExperimentConfig cfg;

  parser.take_int("world.M", cfg.world.M, 1, 1 << 20, "> 0");
  parser.take_int("world.K", cfg.world.K, 2, 1 << 20, ">= 2");
  parser.take_int("world.d", cfg.world.d, 1, 1024, "in [1, 1024]");
  parser.take_int("world.raw_dim", cfg.world.raw_dim, 0, 1 << 20, ">= 0");
  parser.take_double("world.S", cfg.world.S, true, false, "> 0");
  parser.take_double("world.R_max", cfg.world.R_max, true, true, ">= 0");
  parser.take_u64("world.seed", cfg.world.seed);
  {
    std::string gen;
    parser.take_string("world.generator", gen);
    if (!gen.empty()) {
      try {
        cfg.world.generator = generator_from_name(gen);
      } catch (const std::exception& e) {
        parser.violations.push_back(std::string("world.generator: ") + e.what());
      }
    }
  }

  parser.take_int("train.T", cfg.train.T, 0, 1 << 24, ">= 0");
  parser.take_double("train.beta", cfg.train.beta, true, false, "> 0");
  {
    std::string alpha;
    parser.take_string("train.alpha", alpha);
    if (!alpha.empty()) {
      if (alpha == "sqrtT") {
        cfg.train.alpha_sqrt_T = true;
      } else {
        try {
          std::size_t pos = 0;
          const double v = std::stod(alpha, &pos);
          if (pos != alpha.size()) throw std::invalid_argument("trailing characters");
          if (v < 0.0) {
            parser.violations.push_back("train.alpha: must be >= 0 or 'sqrtT' (got " + alpha + ")");
          } else {
            cfg.train.alpha = v;
            cfg.train.alpha_sqrt_T = false;
          }
        } catch (const std::exception&) {
          parser.violations.push_back("train.alpha: must be a number or 'sqrtT' (got '" + alpha +
                                      "')");
        }
      }
    }
  }
  parser.take_double("train.lambda", cfg.train.lambda, true, false, "> 0");
  parser.take_int("train.H", cfg.train.H, 1, 1 << 24, ">= 1");
  parser.take_double("train.c_b", cfg.train.c_b, true, false, "> 0");
  parser.take_double("train.epsilon", cfg.train.epsilon, true, false, "> 0");
  parser.take_int("train.buffer_capacity", cfg.train.buffer_capacity, 1, 1 << 24, ">= 1");
  parser.take_int("train.gd_steps", cfg.train.gd_steps, 0, 1 << 20, ">= 0");
  parser.take_double("train.gd_lr", cfg.train.gd_lr, true, false, "> 0");
  parser.take_double("train.delta", cfg.train.delta, true, false, "in (0, 1)");
  if (!(cfg.train.delta > 0.0 && cfg.train.delta < 1.0)) {
    parser.violations.push_back("train.delta: must be in (0, 1) (got " +
                                std::to_string(cfg.train.delta) + ")");
  }
  {
    std::string mode;
    parser.take_string("train.width_mode", mode);
    if (!mode.empty()) {
      if (mode == "proxy") cfg.train.width_mode = WidthMode::kProxy;
      else if (mode == "theoretical") cfg.train.width_mode = WidthMode::kTheoretical;
      else if (mode == "plugin") cfg.train.width_mode = WidthMode::kPlugin;
      else parser.violations.push_back(
          "train.width_mode: must be proxy, theoretical or plugin (got '" + mode + "')");
    }
  }
  {
    std::string mode;
    parser.take_string("train.objective", mode);
    if (!mode.empty()) {
      if (mode == "exact") cfg.train.objective_mode = ObjectiveMode::kExactBonus;
      else if (mode == "pruned") cfg.train.objective_mode = ObjectiveMode::kPruned;
      else parser.violations.push_back("train.objective: must be exact or pruned (got '" +
                                       mode + "')");
    }
  }
  parser.take_bool("train.pre_update_radius", cfg.train.pre_update_radius);
  parser.take_bool("train.track_refreshed_regret", cfg.train.track_refreshed_regret);
  parser.take_int("train.probe_pairs", cfg.train.probe_pairs, 0, 1 << 20, ">= 0");

  if (parser.has("experiment.arms")) {
    std::string arms;
    parser.take_string("experiment.arms", arms);
    cfg.arms.clear();
    for (const auto& item : split_list(arms)) {
      try {
        cfg.arms.push_back(arm_from_name(item));
      } catch (const std::exception& e) {
        parser.violations.push_back(std::string("experiment.arms: ") + e.what());
      }
    }
  }
  if (parser.has("experiment.seeds")) {
    std::string seeds;
    parser.take_string("experiment.seeds", seeds);
    cfg.seeds.clear();
    for (const auto& item : split_list(seeds)) {
      try {
        std::size_t pos = 0;
        cfg.seeds.push_back(std::stoull(item, &pos));
        if (pos != item.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        parser.violations.push_back("experiment.seeds: not an integer (got '" + item + "')");
      }
    }
  }
  parser.take_string("experiment.output_dir", cfg.output_dir);

  parser.report_unknown();

  // Cross-field constraints.
  const long budget = static_cast<long>(cfg.world.M) * cfg.world.K * cfg.world.K;
  if (budget > 1000000L) {
    parser.violations.push_back("world.M * K^2: enumeration budget must be <= 1e6 (got " +
                                std::to_string(budget) + ")");
  }
  if (cfg.world.raw_dim > 0 && cfg.world.raw_dim < cfg.world.d) {
    parser.violations.push_back("world.raw_dim: must be 0 or >= world.d");
  }
  if (cfg.arms.empty()) parser.violations.push_back("experiment.arms: at least one arm required");
  if (cfg.seeds.empty()) parser.violations.push_back("experiment.seeds: at least one seed required");
  if (cfg.output_dir.empty()) parser.violations.push_back("experiment.output_dir: must be non-empty");

  if (!parser.violations.empty()) {
    throw ConfigError(std::move(parser.violations));
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw ConfigError({"config file not found: " + path});
  }
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

WorldSpec world_spec_from_config(const WorldConfig& wc) {
  WorldSpec spec;
  spec.num_prompts = wc.M;
  spec.pool_size = wc.K;
  spec.feature_dim = wc.d;
  spec.raw_dim = wc.raw_dim;
  spec.S = wc.S;
  spec.R_max = wc.R_max;
  spec.seed = wc.seed;
  spec.generator = wc.generator;
  auto rng = make_stream(wc.seed, Stream::kTheta);
  // ||theta*|| = sqrt(2) ||theta_plus||; draw so the concatenated parameter
  // meets the norm bound S exactly.
  spec.theta_plus = random_direction(wc.d, wc.S / std::sqrt(2.0), rng);
  return spec;
}

RunConfig run_config_from(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.T = cfg.train.T;
  rc.beta = cfg.train.beta;
  rc.alpha = resolved_alpha(cfg.train);
  rc.lambda = cfg.train.lambda;
  rc.refresh_interval = cfg.train.H;
  rc.c_b = cfg.train.c_b;
  rc.epsilon = cfg.train.epsilon;
  rc.buffer_capacity = cfg.train.buffer_capacity;
  rc.gd_steps = cfg.train.gd_steps;
  rc.gd_lr = cfg.train.gd_lr;
  rc.delta = cfg.train.delta;
  rc.width_mode = cfg.train.width_mode;
  rc.objective_mode = cfg.train.objective_mode;
  rc.pre_update_radius = cfg.train.pre_update_radius;
  rc.track_refreshed_regret = cfg.train.track_refreshed_regret;
  rc.probe_pairs = cfg.train.probe_pairs;
  return rc;
}

}  // namespace depo
