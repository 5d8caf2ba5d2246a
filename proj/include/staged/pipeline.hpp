#pragma once

#include "staged/checkpoint.hpp"
#include "staged/config.hpp"
#include "staged/io.hpp"
#include "staged/metrics.hpp"
#include "staged/staging.hpp"
#include "staged/train.hpp"
#include "staged/uncertainty.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

/**
 * @file pipeline.hpp
 * @brief End-to-end run: graphs, trial ensembles for all seven view
 * configurations, stage-plan selection, threshold search, staged prediction,
 * and the report files.
 *
 * Files written to the output directory:
 *
 *   summaries.tsv       sample_id, stage_model, p_mean, sigma, voted_label
 *   samples.tsv         sample_id, label, tune, test
 *   run_meta.json       view names/costs and staging options used by `stage`
 *   metrics.tsv         per configuration (and "staged"): acc, f1, auc, avg sigma on the test set
 *   staging_report.txt  thresholds, plan, fractions, accuracy, expected cost, routing table
 *   cost.tsv            per-stage cumulative cost and fraction
 *   histogram.tsv       config, class, bin_lo, bin_hi, count
 *   summary.json        machine-readable roll-up of the above
 *   train_log.tsv       per-epoch losses (optional)
 *   checkpoints/        trained weights (first `checkpoint_trials` trials)
 *
 * A `stage_model` value names the views of a configuration by 1-based id,
 * e.g. "1", "1+2", "1+2+3".
 */

namespace staged {

inline std::vector<ViewSet> all_view_configurations(std::size_t view_count = 3) {
  std::vector<ViewSet> out;
  for (std::size_t a = 0; a < view_count; ++a) out.push_back({a});
  for (std::size_t a = 0; a < view_count; ++a)
    for (std::size_t b = a + 1; b < view_count; ++b) out.push_back({a, b});
  ViewSet all;
  for (std::size_t a = 0; a < view_count; ++a) all.push_back(a);
  if (view_count > 2) out.push_back(all);
  return out;
}

inline std::string config_key(const ViewSet& views) {
  std::string s;
  for (auto v : views) s += (s.empty() ? "" : "+") + std::to_string(v + 1);
  return s;
}

inline ViewSet parse_config_key(const std::string& key) {
  ViewSet out;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '+')) {
    const auto id = detail::parse_number<std::size_t>("stage_model", part);
    if (id == 0) throw DataError("bad stage_model '" + key + "'");
    out.push_back(id - 1);
  }
  if (out.empty()) throw DataError("empty stage_model");
  return out;
}

/// Ensemble summaries of every configuration over the evaluation samples.
struct TrainedRun {
  std::vector<int> labels;             // indexed by sample id
  std::vector<std::size_t> tune_ids;   // threshold / plan selection samples
  std::vector<std::size_t> test_ids;   // reporting samples
  std::vector<std::size_t> eval_ids;   // union, row order of every summary list
  std::map<ViewSet, std::vector<EnsembleSummary>> summaries;
  std::vector<std::string> view_names;
  std::vector<double> view_costs;
};

/// Fit / tune / test partition. With tune_on_test the test samples double as
/// the tuning set; otherwise a seeded `validation_fraction` of the training
/// samples is held out of fitting.
struct Partition {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> tune;
  std::vector<std::size_t> test;
  std::vector<std::size_t> eval;  // tune then test, duplicates removed
};

inline Partition make_partition(const Dataset& d, const RunConfig& cfg) {
  Partition p;
  p.test = d.test_index;
  if (cfg.tune_on_test) {
    p.fit = d.train_index;
    p.tune = d.test_index;
    p.eval = d.test_index;
    return p;
  }
  std::vector<std::size_t> shuffled = d.train_index;
  Rng rng(derive_seed(cfg.train.seed, 0x7a1d));
  rng.shuffle(shuffled);
  auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(shuffled.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, shuffled.size() - 1);
  p.tune.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(p.tune.begin(), p.tune.end());
  for (auto i : d.train_index)
    if (!std::binary_search(p.tune.begin(), p.tune.end(), i)) p.fit.push_back(i);
  p.eval = p.tune;
  p.eval.insert(p.eval.end(), p.test.begin(), p.test.end());
  return p;
}

/// Rows of `all` (ordered by `all_ids`) for the requested ids, in that order.
inline std::vector<EnsembleSummary> select_samples(const std::vector<EnsembleSummary>& all,
                                                   std::span<const std::size_t> ids) {
  std::unordered_map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < all.size(); ++i) pos[all[i].sample_id] = i;
  std::vector<EnsembleSummary> out;
  for (auto id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw AlignmentError("sample " + std::to_string(id) + " missing from summaries");
    out.push_back(all[it->second]);
  }
  return out;
}

inline std::vector<int> labels_for(const std::vector<int>& labels, std::span<const std::size_t> ids) {
  std::vector<int> out;
  for (auto id : ids) out.push_back(labels.at(id));
  return out;
}

// ---------------------------------------------------------------------------
// Training stage
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v, const char* f = "%.10g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

/// Log line with loss columns placed at the global view id of each view.
inline std::string log_line(const std::string& key, std::size_t trial, const TrainLog::Row& r, const ViewSet& views,
                            std::size_t view_count) {
  std::vector<std::string> cols(view_count);
  if (r.phase == "pretrain") {
    if (!r.view_losses.empty()) cols[views[r.view]] = fmt(r.view_losses[0]);
  } else {
    for (std::size_t k = 0; k < r.view_losses.size(); ++k) cols[views[k]] = fmt(r.view_losses[k]);
  }
  std::string s = key + "\t" + std::to_string(trial) + "\t" + r.phase + "\t" + std::to_string(r.epoch);
  for (const auto& c : cols) s += "\t" + c;
  s += "\t" + (std::isfinite(r.vcdn_loss) ? fmt(r.vcdn_loss) : std::string()) + "\t" + fmt(r.total);
  return s;
}

}  // namespace detail

/// Trains T trials for every view configuration. Checkpoints and the training
/// log go under `out_dir` (pass an empty path to skip writing them).
inline TrainedRun train_all(const Dataset& d, const RunConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  if (d.views.size() != 3) throw DataError("staged runs need exactly three views");
  const Partition part = make_partition(d, cfg);
  const auto configs = all_view_configurations(d.views.size());
  const auto features = d.feature_matrices();

  std::vector<TrialInputs> inputs;
  for (const auto& vs : configs) {
    inputs.push_back(prepare_trial_inputs(features, d.labels, part.fit, part.eval, vs, cfg.train.k_target));
  }

  struct Job {
    std::size_t config;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < configs.size(); ++c)
    for (std::size_t t = 0; t < cfg.train.trials; ++t) jobs.push_back({c, t});

  std::vector<TrialOutput> outputs(jobs.size());
  std::vector<TrainLog> logs(jobs.size());
  std::vector<TrialModels> models(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const bool keep = jobs[j].trial < cfg.checkpoint_trials && !out_dir.empty();
        outputs[j] = run_trial(inputs[jobs[j].config], cfg.train, jobs[j].trial, cfg.train_log ? &logs[j] : nullptr,
                               keep ? &models[j] : nullptr);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(cfg.threads, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const NumericError& e) {
      throw NumericError("configuration " + config_key(configs[jobs[j].config]) + ", trial " +
                         std::to_string(jobs[j].trial) + ": " + e.what());
    }
  }

  TrainedRun run;
  run.labels = d.labels;
  run.tune_ids = part.tune;
  run.test_ids = part.test;
  run.eval_ids = part.eval;
  run.view_names = cfg.view_names;
  run.view_costs = cfg.view_costs;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<TrialOutput> trials(outputs.begin() + static_cast<std::ptrdiff_t>(c * cfg.train.trials),
                                    outputs.begin() + static_cast<std::ptrdiff_t>((c + 1) * cfg.train.trials));
    run.summaries[configs[c]] = summarize_trials(trials);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    if (cfg.train_log) {
      auto out = detail::open_out(out_dir / "train_log.tsv");
      out << "config\ttrial\tphase\tepoch";
      for (std::size_t v = 0; v < d.views.size(); ++v) out << "\tloss_view" << v + 1;
      out << "\tloss_vcdn\ttotal\n";
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        const auto& vs = configs[jobs[j].config];
        for (const auto& r : logs[j].rows) out << detail::log_line(config_key(vs), jobs[j].trial, r, vs, d.views.size()) << '\n';
      }
    }
    if (cfg.checkpoint_trials > 0) {
      std::filesystem::create_directories(out_dir / "checkpoints");
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (models[j].classifiers.empty()) continue;
        const auto& vs = configs[jobs[j].config];
        Checkpoint ck;
        ck.fingerprint = {{"config", config_key(vs)},
                          {"trial", jobs[j].trial},
                          {"seed", cfg.train.seed},
                          {"trial_seed", derive_seed(cfg.train.seed, jobs[j].trial)},
                          {"k_target", cfg.train.k_target},
                          {"trials", cfg.train.trials},
                          {"hidden", cfg.train.hidden},
                          {"head_hidden", cfg.train.head_hidden},
                          {"dropout", cfg.train.dropout}};
        nlohmann::json inputs_json = nlohmann::json::array();
        for (std::size_t k = 0; k < vs.size(); ++k) {
          inputs_json.push_back(models[j].classifiers[k].dims.input);
          ck.add("view" + std::to_string(vs[k] + 1) + ".", models[j].classifiers[k].params);
        }
        ck.fingerprint["input_dims"] = inputs_json;
        if (models[j].head) ck.add("vcdn.", models[j].head->params);
        std::string name = config_key(vs);
        std::replace(name.begin(), name.end(), '+', '-');
        save_checkpoint((out_dir / "checkpoints" / ("config" + name + "_trial" + std::to_string(jobs[j].trial) + ".ckpt")).string(), ck);
      }
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Staging stage
// ---------------------------------------------------------------------------

struct ConfigMetrics {
  ViewSet views;
  double tune_accuracy = 0.0;
  std::optional<MetricsReport> test;  // absent when the test set is single-class for AUC
  double test_accuracy = 0.0;
  double test_f1 = 0.0;
  double avg_uncertainty = 0.0;
};

struct StageOutcome {
  StagePlan plan;
  ThresholdSearch search;  // on the tuning set
  std::array<double, 3> tune_stage_accuracy{};  // pure stage-k routing on the tuning set
  StagedResult test_result;
  std::optional<double> test_auc;
  double test_f1 = 0.0;
  CostReport cost;
  std::vector<ConfigMetrics> configs;
};

inline StageOutcome stage_run(const TrainedRun& run, std::size_t grid_steps = 100) {
  StageOutcome o;
  const auto tune_labels = labels_for(run.labels, run.tune_ids);
  const auto test_labels = labels_for(run.labels, run.test_ids);

  std::map<ViewSet, double> tune_acc;
  for (const auto& [vs, sums] : run.summaries) {
    ConfigMetrics m;
    m.views = vs;
    const auto tune = select_samples(sums, run.tune_ids);
    const auto test = select_samples(sums, run.test_ids);
    std::vector<int> tp, pp;
    std::vector<double> scores;
    for (const auto& s : tune) tp.push_back(s.voted_label);
    for (const auto& s : test) {
      pp.push_back(s.voted_label);
      scores.push_back(s.mean_prob);
    }
    m.tune_accuracy = accuracy(tp, tune_labels);
    m.test_accuracy = accuracy(pp, test_labels);
    m.test_f1 = f1(pp, test_labels);
    try {
      m.test = evaluate(pp, scores, test_labels);
    } catch (const DomainError&) {
      m.test.reset();
    }
    m.avg_uncertainty = average_uncertainty(test);
    tune_acc[vs] = m.tune_accuracy;
    o.configs.push_back(std::move(m));
  }

  o.plan = select_stage_plan(tune_acc, 3);
  const auto t1 = select_samples(run.summaries.at(o.plan.stage1), run.tune_ids);
  const auto t2 = select_samples(run.summaries.at(o.plan.stage2), run.tune_ids);
  const auto t3 = select_samples(run.summaries.at(o.plan.stage3), run.tune_ids);
  o.search = optimize_thresholds(t1, t2, t3, tune_labels, grid_steps);
  o.tune_stage_accuracy = {tune_acc.at(o.plan.stage1), tune_acc.at(o.plan.stage2), tune_acc.at(o.plan.stage3)};

  const auto e1 = select_samples(run.summaries.at(o.plan.stage1), run.test_ids);
  const auto e2 = select_samples(run.summaries.at(o.plan.stage2), run.test_ids);
  const auto e3 = select_samples(run.summaries.at(o.plan.stage3), run.test_ids);
  o.test_result = staged_predict(e1, e2, e3, o.search.thresholds, test_labels);
  std::vector<int> pred;
  std::vector<double> scores;
  for (const auto& s : o.test_result.samples) {
    pred.push_back(s.final_label);
    scores.push_back(s.score);
  }
  o.test_f1 = f1(pred, test_labels);
  try {
    o.test_auc = auc(scores, test_labels);
  } catch (const DomainError&) {
    o.test_auc.reset();
  }
  o.cost = cost_report(o.test_result, o.plan, run.view_costs);
  return o;
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

struct HistogramRow {
  std::string config;
  int label = 0;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  std::size_t count = 0;
};

/// Per configuration and true class, counts of sigma over [0, max sigma of
/// that configuration] split into `bins` equal bins (last bin closed).
inline std::vector<HistogramRow> emit_histogram(
    const std::vector<std::pair<std::string, std::vector<EnsembleSummary>>>& per_config,
    const std::vector<int>& labels_by_id, std::size_t bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<HistogramRow> rows;
  for (const auto& [name, sums] : per_config) {
    double hi = 0.0;
    for (const auto& s : sums) hi = std::max(hi, s.sigma);
    const double width = hi / static_cast<double>(bins);
    for (int label : {0, 1}) {
      std::vector<std::size_t> counts(bins, 0);
      for (const auto& s : sums) {
        if (labels_by_id.at(s.sample_id) != label) continue;
        std::size_t b = width > 0.0 ? static_cast<std::size_t>(s.sigma / width) : 0;
        ++counts[std::min(b, bins - 1)];
      }
      for (std::size_t b = 0; b < bins; ++b) {
        rows.push_back({name, label, width * static_cast<double>(b),
                        b + 1 == bins ? hi : width * static_cast<double>(b + 1), counts[b]});
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report writers / readers
// ---------------------------------------------------------------------------

inline void write_summaries(const std::filesystem::path& dir, const TrainedRun& run) {
  auto out = detail::open_out(dir / "summaries.tsv");
  out << "sample_id\tstage_model\tp_mean\tsigma\tvoted_label\n";
  for (const auto& [vs, sums] : run.summaries) {
    for (const auto& s : sums) {
      out << s.sample_id << '\t' << config_key(vs) << '\t' << detail::fmt(s.mean_prob, "%.17g") << '\t'
          << detail::fmt(s.sigma, "%.17g") << '\t' << s.voted_label << '\n';
    }
  }
  auto samples = detail::open_out(dir / "samples.tsv");
  samples << "sample_id\tlabel\ttune\ttest\n";
  std::vector<std::size_t> tune = run.tune_ids, test = run.test_ids;
  std::sort(tune.begin(), tune.end());
  std::sort(test.begin(), test.end());
  for (auto id : run.eval_ids) {
    samples << id << '\t' << run.labels.at(id) << '\t' << (std::binary_search(tune.begin(), tune.end(), id) ? 1 : 0)
            << '\t' << (std::binary_search(test.begin(), test.end(), id) ? 1 : 0) << '\n';
  }
  nlohmann::json meta = {{"view_names", run.view_names}, {"view_costs", run.view_costs}};
  detail::open_out(dir / "run_meta.json") << meta.dump(2) << '\n';
}

namespace detail {
inline std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& p, std::size_t cols) {
  auto lines = read_lines(p);
  if (lines.empty()) throw DataError(p.string() + ": empty file");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cells;
    std::stringstream ss(lines[i]);
    std::string c;
    while (std::getline(ss, c, '\t')) cells.push_back(c);
    if (cells.size() != cols) throw DataError(p.string() + ":" + std::to_string(i + 1) + ": expected " + std::to_string(cols) + " columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}
}  // namespace detail

/// Reads what write_summaries wrote. Per-trial probabilities are not stored,
/// so `ad_probs` and `vote_counts` are left empty.
inline TrainedRun read_trained_run(const std::filesystem::path& dir) {
  TrainedRun run;
  std::size_t max_id = 0;
  std::vector<std::tuple<std::size_t, int, bool, bool>> samples;
  for (const auto& r : detail::read_tsv(dir / "samples.tsv", 4)) {
    const auto id = detail::parse_number<std::size_t>("sample_id", r[0]);
    samples.emplace_back(id, detail::parse_number<int>("label", r[1]), r[2] == "1", r[3] == "1");
    max_id = std::max(max_id, id);
  }
  run.labels.assign(max_id + 1, 0);
  for (const auto& [id, label, tune, test] : samples) {
    run.labels[id] = label;
    run.eval_ids.push_back(id);
    if (tune) run.tune_ids.push_back(id);
    if (test) run.test_ids.push_back(id);
  }
  for (const auto& r : detail::read_tsv(dir / "summaries.tsv", 5)) {
    EnsembleSummary s;
    s.sample_id = detail::parse_number<std::size_t>("sample_id", r[0]);
    s.mean_prob = detail::parse_double(r[2], "summaries.tsv p_mean");
    s.sigma = detail::parse_double(r[3], "summaries.tsv sigma");
    s.voted_label = detail::parse_number<int>("voted_label", r[4]);
    run.summaries[parse_config_key(r[1])].push_back(std::move(s));
  }
  std::ifstream meta_in(dir / "run_meta.json");
  if (!meta_in) throw DataError("missing " + (dir / "run_meta.json").string());
  const auto meta = nlohmann::json::parse(meta_in);
  run.view_names = meta.at("view_names").get<std::vector<std::string>>();
  run.view_costs = meta.at("view_costs").get<std::vector<double>>();
  return run;
}

inline std::string view_list(const ViewSet& vs, const std::vector<std::string>& names) {
  std::string s;
  for (auto v : vs) s += (s.empty() ? "" : "+") + (v < names.size() ? names[v] : std::to_string(v + 1));
  return s;
}

/// Per-configuration test metrics followed by a "staged" row.
inline void write_metrics_table(std::ostream& out, const TrainedRun& run, const StageOutcome& o) {
  using detail::fmt;
  out << "config\tviews\tacc\tf1\tauc\tavg_uncertainty\ttune_acc\tn_test\n";
  for (const auto& m : o.configs) {
    out << config_key(m.views) << '\t' << view_list(m.views, run.view_names) << '\t' << fmt(m.test_accuracy) << '\t'
        << fmt(m.test_f1) << '\t' << (m.test ? fmt(m.test->auc) : "NA") << '\t' << fmt(m.avg_uncertainty) << '\t'
        << fmt(m.tune_accuracy) << '\t' << run.test_ids.size() << '\n';
  }
  out << "staged\tstaged\t" << fmt(o.test_result.accuracy.value_or(0.0)) << '\t' << fmt(o.test_f1) << '\t'
      << (o.test_auc ? fmt(*o.test_auc) : "NA") << "\tNA\t" << fmt(o.search.best_accuracy) << '\t'
      << run.test_ids.size() << '\n';
}

/// Sigma histogram of the test samples for every configuration.
inline void write_histogram_table(std::ostream& out, const TrainedRun& run, std::size_t bins) {
  std::vector<std::pair<std::string, std::vector<EnsembleSummary>>> per_config;
  for (const auto& [vs, sums] : run.summaries) per_config.emplace_back(config_key(vs), select_samples(sums, run.test_ids));
  out << "config\tclass\tbin_lo\tbin_hi\tcount\n";
  for (const auto& r : emit_histogram(per_config, run.labels, bins)) {
    out << r.config << '\t' << r.label << '\t' << detail::fmt(r.bin_lo) << '\t' << detail::fmt(r.bin_hi) << '\t'
        << r.count << '\n';
  }
}

inline void write_stage_reports(const std::filesystem::path& dir, const TrainedRun& run, const StageOutcome& o,
                                std::size_t histogram_bins) {
  using detail::fmt;
  std::filesystem::create_directories(dir);
  const auto& names = run.view_names;

  {
    auto out = detail::open_out(dir / "metrics.tsv");
    write_metrics_table(out, run, o);
  }

  {
    auto out = detail::open_out(dir / "staging_report.txt");
    out << "# staging report\n";
    out << "stage1_views\t" << view_list(o.plan.stage1, names) << '\n';
    out << "stage2_views\t" << view_list(o.plan.stage2, names) << '\n';
    out << "stage3_views\t" << view_list(o.plan.stage3, names) << '\n';
    out << "t1\t" << fmt(o.search.thresholds.t1) << '\n';
    out << "t2\t" << fmt(o.search.thresholds.t2) << '\n';
    out << "tune_accuracy\t" << fmt(o.search.best_accuracy) << '\n';
    out << "test_accuracy\t" << fmt(o.test_result.accuracy.value_or(0.0)) << '\n';
    for (std::size_t k = 0; k < 3; ++k) out << "fraction_stage" << k + 1 << '\t' << fmt(o.test_result.stage_fractions[k]) << '\n';
    out << "expected_cost\t" << fmt(o.cost.expected) << '\n';
    out << "\nsample_id\texit_stage\tlabel\tsigma_stage1\tsigma_stage2\tsigma_stage3\n";
    for (const auto& s : o.test_result.samples) {
      out << s.sample_id << '\t' << s.exit_stage << '\t' << s.final_label;
      for (std::size_t k = 0; k < 3; ++k) out << '\t' << (k < s.sigmas.size() ? fmt(s.sigmas[k]) : "");
      out << '\n';
    }
  }

  {
    auto out = detail::open_out(dir / "cost.tsv");
    out << "stage\tviews\tcumulative_cost\tfraction\n";
    for (std::size_t k = 0; k < 3; ++k) {
      out << k + 1 << '\t' << view_list(o.plan.stage(k), names) << '\t' << fmt(o.cost.cumulative[k]) << '\t'
          << fmt(o.test_result.stage_fractions[k]) << '\n';
    }
    out << "expected\t\t" << fmt(o.cost.expected) << "\t1\n";
  }

  {
    auto out = detail::open_out(dir / "histogram.tsv");
    write_histogram_table(out, run, histogram_bins);
  }

  {
    nlohmann::json j;
    auto ids = [](const ViewSet& vs) {
      std::vector<std::size_t> out;
      for (auto v : vs) out.push_back(v + 1);
      return out;
    };
    j["plan"] = {{"stage1", ids(o.plan.stage1)}, {"stage2", ids(o.plan.stage2)}, {"stage3", ids(o.plan.stage3)}};
    j["thresholds"] = {{"t1", o.search.thresholds.t1}, {"t2", o.search.thresholds.t2}};
    j["tune_accuracy"] = o.search.best_accuracy;
    j["tune_stage_accuracy"] = o.tune_stage_accuracy;
    j["stage_fractions"] = o.test_result.stage_fractions;
    j["staged"] = {{"acc", o.test_result.accuracy.value_or(0.0)}, {"f1", o.test_f1}};
    j["staged"]["auc"] = o.test_auc ? nlohmann::json(*o.test_auc) : nlohmann::json(nullptr);
    j["cumulative_costs"] = o.cost.cumulative;
    j["expected_cost"] = o.cost.expected;
    j["n_tune"] = run.tune_ids.size();
    j["n_test"] = run.test_ids.size();
    nlohmann::json configs = nlohmann::json::object();
    for (const auto& m : o.configs) {
      configs[config_key(m.views)] = {{"views", view_list(m.views, names)},
                                      {"acc", m.test_accuracy},
                                      {"f1", m.test_f1},
                                      {"auc", m.test ? nlohmann::json(m.test->auc) : nlohmann::json(nullptr)},
                                      {"avg_uncertainty", m.avg_uncertainty},
                                      {"tune_acc", m.tune_accuracy}};
    }
    j["configs"] = configs;
    detail::open_out(dir / "summary.json") << j.dump(2) << '\n';
  }
}

struct PipelineResult {
  Dataset dataset;
  TrainedRun run;
  StageOutcome outcome;
};

inline Dataset load_run_data(const RunConfig& cfg) {
  Dataset d = cfg.synthetic ? generate_synthetic(cfg.synth_n, cfg.synth_d, cfg.synth_snr, cfg.synth_seed)
                            : load_dataset(cfg.data_dir);
  for (std::size_t k = 0; k < d.views.size() && k < cfg.view_names.size(); ++k) {
    d.views[k].name = cfg.view_names[k];
    d.views[k].cost = cfg.view_costs[k];
  }
  return d;
}

/// Full run: data, trials for all configurations, staging, reports.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  PipelineResult r;
  r.dataset = load_run_data(cfg);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  r.run = train_all(r.dataset, cfg, dir);
  write_summaries(dir, r.run);
  r.outcome = stage_run(r.run, cfg.grid_steps);
  write_stage_reports(dir, r.run, r.outcome, cfg.histogram_bins);
  return r;
}

}  // namespace staged
