// staged-omics: train, stage and inspect staged multi-omics classifiers.

#include "staged/staged.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool tune_on_test = false;
  std::vector<std::string> settings;
  std::string data_dir;
  bool synthetic = false;
};

staged::RunConfig resolve_config(const GlobalOptions& g) {
  staged::RunConfig cfg;
  if (!g.config_path.empty()) cfg = staged::load_config(g.config_path);
  for (const auto& kv : g.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw staged::ConfigError("--set expects key=value, got '" + kv + "'");
    staged::apply_setting(cfg, staged::detail::trim_copy(kv.substr(0, eq)), staged::detail::trim_copy(kv.substr(eq + 1)));
  }
  if (g.seed) cfg.train.seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (g.tune_on_test) cfg.tune_on_test = true;
  if (!g.data_dir.empty()) {
    cfg.data_dir = g.data_dir;
    cfg.synthetic = false;
  }
  if (g.synthetic) {
    cfg.synthetic = true;
    cfg.data_dir.clear();
  }
  return cfg;
}

staged::TrainedRun load_run(const std::string& run_dir, bool tune_on_test) {
  if (run_dir.empty()) throw staged::ConfigError("--run is required");
  auto run = staged::read_trained_run(run_dir);
  if (tune_on_test) run.tune_ids = run.test_ids;
  return run;
}

void print_outcome(const staged::StageOutcome& o, const staged::TrainedRun& run) {
  std::printf("stages: %s | %s | %s\n", staged::view_list(o.plan.stage1, run.view_names).c_str(),
              staged::view_list(o.plan.stage2, run.view_names).c_str(),
              staged::view_list(o.plan.stage3, run.view_names).c_str());
  std::printf("thresholds: t1=%.6g t2=%.6g (tuning accuracy %.4f)\n", o.search.thresholds.t1, o.search.thresholds.t2,
              o.search.best_accuracy);
  std::printf("test: acc=%.4f fractions=%.4f/%.4f/%.4f expected_cost=%.4g\n", o.test_result.accuracy.value_or(0.0),
              o.test_result.stage_fractions[0], o.test_result.stage_fractions[1], o.test_result.stage_fractions[2],
              o.cost.expected);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Uncertainty-staged multi-omics classification"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "training seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--tune-on-test", g.tune_on_test, "choose thresholds on the test samples");
  app.add_option("--set", g.settings, "override one configuration key (key=value), repeatable");
  app.add_option("--data", g.data_dir, "dataset directory");
  app.add_flag("--synthetic", g.synthetic, "use generated data");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in the loader's layout");
  auto* train = app.add_subcommand("train", "train all view configurations, stage, and write reports");

  auto* stage = app.add_subcommand("stage", "re-run stage selection and threshold search on a trained run");
  std::string run_dir;
  std::size_t grid_steps = 0;
  stage->add_option("--run", run_dir, "directory written by train")->required();
  stage->add_option("--grid-steps", grid_steps, "threshold grid resolution (default from config)");

  auto* predict = app.add_subcommand("predict", "route test samples through the cascade at given thresholds");
  double t1 = 0.0, t2 = 0.0;
  predict->add_option("--run", run_dir, "directory written by train")->required();
  predict->add_option("--t1", t1, "stage-1 uncertainty threshold")->required();
  predict->add_option("--t2", t2, "stage-2 uncertainty threshold")->required();

  auto* report = app.add_subcommand("report", "print test metrics and write the uncertainty histogram");
  std::size_t bins = 0;
  report->add_option("--run", run_dir, "directory written by train")->required();
  report->add_option("--bins", bins, "histogram bins (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const staged::RunConfig cfg = resolve_config(g);

  if (synth->parsed()) {
    const auto d = staged::generate_synthetic(cfg.synth_n, cfg.synth_d, cfg.synth_snr, cfg.synth_seed);
    staged::write_dataset(cfg.output_dir, d);
    std::printf("wrote %zu samples (%zu train, %zu test) to %s\n", d.labels.size(), d.train_index.size(),
                d.test_index.size(), cfg.output_dir.c_str());
    return 0;
  }

  if (train->parsed()) {
    const auto r = staged::run_pipeline(cfg);
    print_outcome(r.outcome, r.run);
    std::printf("reports in %s\n", cfg.output_dir.c_str());
    return 0;
  }

  if (stage->parsed()) {
    const auto run = load_run(run_dir, cfg.tune_on_test);
    const auto o = staged::stage_run(run, grid_steps ? grid_steps : cfg.grid_steps);
    const fs::path out = g.out.empty() ? fs::path(run_dir) : fs::path(g.out);
    staged::write_stage_reports(out, run, o, cfg.histogram_bins);
    print_outcome(o, run);
    return 0;
  }

  if (predict->parsed()) {
    const auto run = load_run(run_dir, cfg.tune_on_test);
    const auto plan = staged::stage_run(run, cfg.grid_steps).plan;
    auto pick = [&](const staged::ViewSet& vs) { return staged::select_samples(run.summaries.at(vs), run.test_ids); };
    const auto labels = staged::labels_for(run.labels, run.test_ids);
    const auto result = staged::staged_predict(pick(plan.stage1), pick(plan.stage2), pick(plan.stage3), {t1, t2}, labels);
    const fs::path out = g.out.empty() ? fs::path(run_dir) : fs::path(g.out);
    fs::create_directories(out);
    std::ofstream tsv(out / "predictions.tsv");
    if (!tsv) throw staged::ConfigError("cannot write " + (out / "predictions.tsv").string());
    tsv << "sample_id\texit_stage\tpredicted\tp_mean\n";
    for (const auto& s : result.samples) {
      tsv << s.sample_id << '\t' << s.exit_stage << '\t' << s.final_label << '\t' << staged::detail::fmt(s.score) << '\n';
    }
    std::printf("acc=%.4f fractions=%.4f/%.4f/%.4f\n", result.accuracy.value_or(0.0), result.stage_fractions[0],
                result.stage_fractions[1], result.stage_fractions[2]);
    return 0;
  }

  if (report->parsed()) {
    const auto run = load_run(run_dir, cfg.tune_on_test);
    const auto o = staged::stage_run(run, cfg.grid_steps);
    staged::write_metrics_table(std::cout, run, o);
    const fs::path out = g.out.empty() ? fs::path(run_dir) : fs::path(g.out);
    fs::create_directories(out);
    std::ofstream hist(out / "histogram.tsv");
    if (!hist) throw staged::ConfigError("cannot write " + (out / "histogram.tsv").string());
    staged::write_histogram_table(hist, run, bins ? bins : cfg.histogram_bins);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const staged::Error& e) {
    std::cerr << "staged-omics: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "staged-omics: " << e.what() << '\n';
    return 3;
  }
}
