#pragma once

#include "staged/errors.hpp"
#include "staged/train.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file config.hpp
 * @brief Flat `key = value` run configuration.
 *
 * Lines are `key = value`; `#` starts a comment. Unknown keys are errors.
 * Every key has a default, so an empty file runs the reference setup
 * (T = 10, K = 2, three graph layers of 200/200/100 units) once a data
 * source is given.
 *
 * | key                 | default        | meaning                                          |
 * |---------------------|----------------|--------------------------------------------------|
 * | data_dir            | (none)         | MOGONET-layout dataset directory                 |
 * | synthetic           | false          | generate data instead of loading it              |
 * | synth_n             | 200            | synthetic sample count (even)                    |
 * | synth_d             | 20             | synthetic features per view                      |
 * | synth_snr           | 5,0.5,0.5      | class-mean separation per view, noise units      |
 * | synth_seed          | 7              | generator seed                                   |
 * | seed                | 0              | training seed; trial t uses derive_seed(seed, t) |
 * | trials              | 10             | ensemble size T                                  |
 * | k_target            | 2              | mean retained edges per node, self included      |
 * | hidden              | 200,200,100    | graph-layer widths                               |
 * | head_hidden         | 64             | classifier head hidden width                     |
 * | dropout             | 0.5            | dropout on graph-layer outputs while training    |
 * | lr                  | 0.001          | Adam step for per-view classifiers               |
 * | vcdn_lr             | 0.001          | Adam step for the fusion head                    |
 * | pretrain_epochs     | 500            |                                                  |
 * | joint_epochs        | 2500           |                                                  |
 * | tune_on_test        | false          | pick thresholds on the test set                  |
 * | validation_fraction | 0.2            | share of training samples held out for tuning    |
 * | grid_steps          | 100            | threshold grid resolution                        |
 * | view_costs          | 1,1,1          | acquisition cost per view                        |
 * | view_names          | view1,view2,view3 |                                               |
 * | histogram_bins      | 20             |                                                  |
 * | checkpoint_trials   | 1              | trials per configuration saved as checkpoints    |
 * | train_log           | true           | write per-epoch losses                           |
 * | threads             | 1              | parallel training jobs                           |
 * | output_dir          | out            |                                                  |
 */

namespace staged {

struct RunConfig {
  std::string data_dir;
  bool synthetic = false;
  std::size_t synth_n = 200;
  std::size_t synth_d = 20;
  std::array<double, 3> synth_snr{5.0, 0.5, 0.5};
  std::uint64_t synth_seed = 7;

  TrainConfig train;

  bool tune_on_test = false;
  double validation_fraction = 0.2;
  std::size_t grid_steps = 100;
  std::vector<double> view_costs{1.0, 1.0, 1.0};
  std::vector<std::string> view_names{"view1", "view2", "view3"};
  std::size_t histogram_bins = 20;
  std::size_t checkpoint_trials = 1;
  bool train_log = true;
  std::size_t threads = 1;
  std::string output_dir = "out";

  void validate() const {
    if (data_dir.empty() == !synthetic) {
      throw ConfigError("exactly one data source is required: set data_dir or synthetic = true");
    }
    train.validate();
    if (!tune_on_test && !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must lie in (0, 1)");
    }
    if (view_costs.size() != 3) throw ConfigError("view_costs needs three values");
    for (double c : view_costs)
      if (!(c >= 0.0)) throw ConfigError("view costs must be non-negative");
    if (view_names.size() != 3) throw ConfigError("view_names needs three values");
    if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
    if (grid_steps < 2) throw ConfigError("grid_steps must be >= 2");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim_copy(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<T>(key, item));
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& t = c.train;
  if (key == "data_dir") c.data_dir = value;
  else if (key == "synthetic") c.synthetic = parse_bool(key, value);
  else if (key == "synth_n") c.synth_n = parse_number<std::size_t>(key, value);
  else if (key == "synth_d") c.synth_d = parse_number<std::size_t>(key, value);
  else if (key == "synth_snr") {
    const auto v = parse_list<double>(key, value);
    if (v.size() != 3) throw ConfigError("synth_snr needs three values");
    c.synth_snr = {v[0], v[1], v[2]};
  } else if (key == "synth_seed") c.synth_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "trials") t.trials = parse_number<std::size_t>(key, value);
  else if (key == "k_target") t.k_target = parse_number<double>(key, value);
  else if (key == "hidden") t.hidden = parse_list<std::size_t>(key, value);
  else if (key == "head_hidden") t.head_hidden = parse_number<std::size_t>(key, value);
  else if (key == "dropout") t.dropout = parse_number<double>(key, value);
  else if (key == "lr") t.lr = parse_number<double>(key, value);
  else if (key == "vcdn_lr") t.vcdn_lr = parse_number<double>(key, value);
  else if (key == "pretrain_epochs") t.pretrain_epochs = parse_number<std::size_t>(key, value);
  else if (key == "joint_epochs") t.joint_epochs = parse_number<std::size_t>(key, value);
  else if (key == "tune_on_test") c.tune_on_test = parse_bool(key, value);
  else if (key == "validation_fraction") c.validation_fraction = parse_number<double>(key, value);
  else if (key == "grid_steps") c.grid_steps = parse_number<std::size_t>(key, value);
  else if (key == "view_costs") c.view_costs = parse_list<double>(key, value);
  else if (key == "view_names") c.view_names = split_list(value);
  else if (key == "histogram_bins") c.histogram_bins = parse_number<std::size_t>(key, value);
  else if (key == "checkpoint_trials") c.checkpoint_trials = parse_number<std::size_t>(key, value);
  else if (key == "train_log") c.train_log = parse_bool(key, value);
  else if (key == "threads") c.threads = parse_number<std::size_t>(key, value);
  else if (key == "output_dir") c.output_dir = value;
  else throw ConfigError("unknown key '" + key + "'");
}

/// Parses `key = value` text on top of the defaults in `c`.
inline RunConfig parse_config(std::istream& in, RunConfig c = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = detail::trim_copy(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(c, detail::trim_copy(body.substr(0, eq)), detail::trim_copy(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path, RunConfig c = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::move(c));
}

}  // namespace staged
