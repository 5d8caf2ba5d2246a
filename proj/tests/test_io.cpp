#include "staged/config.hpp"
#include "staged/io.hpp"
#include "staged/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using staged::Matrix;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("staged_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Three views, 3 train + 1 test samples, 2 features each.
fs::path toy_dir(const std::string& name) {
  const auto dir = fresh_dir(name);
  for (int k = 1; k <= 3; ++k) {
    const std::string s = std::to_string(k);
    write_file(dir / (s + "_tr.csv"), "1,0.5\n0.25,2\n3,1\n");
    write_file(dir / (s + "_te.csv"), "0.5,0.5\n");
    write_file(dir / (s + "_featname.csv"), "g" + s + "a\ng" + s + "b\n");
  }
  write_file(dir / "labels_tr.csv", "0\n1.0e+00\n1\n");
  write_file(dir / "labels_te.csv", "0\n");
  return dir;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const staged::Error& e) {
    return e.what();
  }
  return {};
}

// Nearest-centroid on one view: train on the train block, score the test block.
double centroid_accuracy(const staged::Dataset& d, std::size_t view) {
  const Matrix& x = d.views[view].features;
  std::vector<double> mu[2] = {std::vector<double>(x.cols()), std::vector<double>(x.cols())};
  double count[2] = {0, 0};
  for (auto i : d.train_index) {
    const int y = d.labels[i];
    count[y] += 1;
    for (std::size_t j = 0; j < x.cols(); ++j) mu[y][j] += x(i, j);
  }
  for (int y : {0, 1})
    for (double& v : mu[y]) v /= count[y];
  std::size_t hits = 0;
  for (auto i : d.test_index) {
    double dist[2] = {0, 0};
    for (int y : {0, 1})
      for (std::size_t j = 0; j < x.cols(); ++j) dist[y] += (x(i, j) - mu[y][j]) * (x(i, j) - mu[y][j]);
    hits += (dist[1] < dist[0] ? 1 : 0) == d.labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(d.test_index.size());
}

staged::RunConfig tiny_run(const fs::path& out) {
  staged::RunConfig c;
  c.synthetic = true;
  c.synth_n = 60;
  c.synth_d = 6;
  c.synth_snr = {4.0, 0.5, 0.5};
  c.train.trials = 3;
  c.train.hidden = {8};
  c.train.head_hidden = 6;
  c.train.pretrain_epochs = 20;
  c.train.joint_epochs = 10;
  c.train.lr = 1e-2;
  c.train.vcdn_lr = 1e-2;
  c.grid_steps = 20;
  c.histogram_bins = 5;
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Load, ToyDirectory) {
  const auto d = staged::load_dataset(toy_dir("toy"));
  EXPECT_EQ(d.sample_count(), 4u);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 1, 0}));
  EXPECT_EQ(d.train_index, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(d.test_index, (std::vector<std::size_t>{3}));
  ASSERT_EQ(d.views.size(), 3u);
  EXPECT_EQ(d.views[1].features(3, 0), 0.5);
  EXPECT_EQ(d.views[2].feature_names[1], "g3b");
}

TEST(Load, NonBinaryLabelNamesLine) {
  const auto dir = toy_dir("badlabel");
  write_file(dir / "labels_tr.csv", "0\n2\n1\n");
  const auto msg = error_text([&] { staged::load_dataset(dir); });
  EXPECT_NE(msg.find("labels_tr.csv:2"), std::string::npos) << msg;
  EXPECT_THROW(staged::load_dataset(dir), staged::DataError);
}

TEST(Load, RowCountMismatch) {
  const auto dir = toy_dir("rows");
  write_file(dir / "2_tr.csv", "1,0.5\n0.25,2\n");
  const auto msg = error_text([&] { staged::load_dataset(dir); });
  EXPECT_NE(msg.find("row-count mismatch"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2_tr.csv"), std::string::npos) << msg;
}

TEST(Load, RaggedAndNonNumericCells) {
  const auto dir = toy_dir("ragged");
  write_file(dir / "1_tr.csv", "1,0.5\n0.25\n3,1\n");
  EXPECT_NE(error_text([&] { staged::load_dataset(dir); }).find("1_tr.csv:2"), std::string::npos);
  write_file(dir / "1_tr.csv", "1,0.5\n0.25,abc\n3,1\n");
  EXPECT_NE(error_text([&] { staged::load_dataset(dir); }).find("'abc'"), std::string::npos);
  fs::remove(dir / "3_featname.csv");
  write_file(dir / "1_tr.csv", "1,0.5\n0.25,2\n3,1\n");
  EXPECT_NE(error_text([&] { staged::load_dataset(dir); }).find("missing file"), std::string::npos);
}

TEST(Load, WriteThenLoadRoundTrips) {
  const auto d = staged::generate_synthetic(20, 5, {2.0, 1.0, 0.0}, 3);
  const auto dir = fresh_dir("roundtrip");
  staged::write_dataset(dir, d);
  EXPECT_EQ(staged::load_dataset(dir), d);
}

TEST(Synthetic, DeterministicAndBalanced) {
  const auto a = staged::generate_synthetic(100, 4, {3.0, 1.0, 0.5}, 9);
  EXPECT_EQ(a, staged::generate_synthetic(100, 4, {3.0, 1.0, 0.5}, 9));
  EXPECT_NE(a, staged::generate_synthetic(100, 4, {3.0, 1.0, 0.5}, 10));
  int pos = 0;
  for (int y : a.labels) pos += y;
  EXPECT_EQ(pos, 50);
  EXPECT_EQ(a.train_index.size(), 70u);
  EXPECT_EQ(a.test_index.size(), 30u);
}

TEST(Synthetic, SignalStrengthControlsSeparability) {
  double noise = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = staged::generate_synthetic(400, 10, {20.0, 0.0, 0.0}, seed);
    EXPECT_EQ(centroid_accuracy(d, 0), 1.0);
    noise += centroid_accuracy(d, 1);
  }
  EXPECT_NEAR(noise / 10.0, 0.5, 0.1);
}

TEST(Synthetic, InvalidSizes) {
  EXPECT_THROW(staged::generate_synthetic(5, 3, {1, 1, 1}, 0), staged::ConfigError);
  EXPECT_THROW(staged::generate_synthetic(10, 0, {1, 1, 1}, 0), staged::ConfigError);
  EXPECT_THROW(staged::generate_synthetic(10, 3, {-1, 1, 1}, 0), staged::ConfigError);
}

TEST(Config, DefaultsAndOverrides) {
  std::istringstream in("# comment\nsynthetic = true\ntrials = 4  # trailing\nhidden = 16, 8\nview_costs = 1,2,3\n");
  const auto c = staged::parse_config(in);
  EXPECT_TRUE(c.synthetic);
  EXPECT_EQ(c.train.trials, 4u);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.view_costs, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(c.train.k_target, 2.0);
  EXPECT_NO_THROW(c.validate());

  const staged::RunConfig d;
  EXPECT_EQ(d.train.trials, 10u);
  EXPECT_EQ(d.train.hidden, (std::vector<std::size_t>{200, 200, 100}));
}

TEST(Config, Errors) {
  std::istringstream unknown("nonsense = 1\n");
  EXPECT_THROW(staged::parse_config(unknown), staged::ConfigError);
  std::istringstream bad_number("trials = ten\n");
  const auto msg = error_text([&] { staged::parse_config(bad_number); });
  EXPECT_NE(msg.find("line 1"), std::string::npos);
  std::istringstream no_eq("trials 3\n");
  EXPECT_THROW(staged::parse_config(no_eq), staged::ConfigError);

  staged::RunConfig none;
  EXPECT_THROW(none.validate(), staged::ConfigError);
  staged::RunConfig both;
  both.synthetic = true;
  both.data_dir = "x";
  EXPECT_THROW(both.validate(), staged::ConfigError);
  EXPECT_THROW(staged::load_config("/nonexistent/run.conf"), staged::ConfigError);
}

TEST(Histogram, ZeroSigmaAllInFirstBin) {
  std::vector<staged::EnsembleSummary> s(4);
  for (std::size_t i = 0; i < 4; ++i) s[i].sample_id = i;
  const std::vector<int> labels{0, 1, 1, 0};
  const auto rows = staged::emit_histogram({{"1", s}}, labels, 10);
  ASSERT_EQ(rows.size(), 20u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].count, i % 10 == 0 ? 2u : 0u) << "row " << i;
}

TEST(Histogram, CountsConserveAndSpreadEvenly) {
  staged::Rng rng(4);
  std::vector<staged::EnsembleSummary> s(2000);
  std::vector<int> labels(2000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].sample_id = i;
    s[i].sigma = rng.uniform(0.0, 0.4);
    labels[i] = static_cast<int>(rng.below(2));
  }
  const std::size_t bins = 10;
  const auto rows = staged::emit_histogram({{"a", s}, {"b", s}}, labels, bins);
  std::size_t total = 0, ones = 0;
  for (int y : labels) ones += y;
  std::size_t per_class[2] = {0, 0};
  double chi2 = 0.0;
  for (const auto& r : rows) {
    total += r.count;
    if (r.config == "a") {
      per_class[r.label] += r.count;
      const double expected = static_cast<double>(r.label == 1 ? ones : 2000 - ones) / bins;
      chi2 += (r.count - expected) * (r.count - expected) / expected;
    }
  }
  EXPECT_EQ(total, 4000u);
  EXPECT_EQ(per_class[1], ones);
  EXPECT_EQ(per_class[0], 2000 - ones);
  // 18 degrees of freedom; 99.9th percentile is about 42.3
  EXPECT_LT(chi2, 42.3);
}

TEST(Pipeline, DeterministicReports) {
  const auto a = fresh_dir("pipe_a"), b = fresh_dir("pipe_b");
  staged::run_pipeline(tiny_run(a));
  staged::run_pipeline(tiny_run(b));
  for (const char* f : {"summaries.tsv", "samples.tsv", "metrics.tsv", "staging_report.txt", "cost.tsv",
                        "histogram.tsv", "summary.json", "train_log.tsv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "checkpoints" / "config1-2-3_trial0.ckpt"));
  EXPECT_FALSE(fs::exists(a / "checkpoints" / "config1-2-3_trial1.ckpt"));
}

TEST(Pipeline, ThreadCountDoesNotChangeResults) {
  const auto a = fresh_dir("pipe_t1"), b = fresh_dir("pipe_t3");
  auto ca = tiny_run(a), cb = tiny_run(b);
  cb.threads = 3;
  staged::run_pipeline(ca);
  staged::run_pipeline(cb);
  EXPECT_EQ(slurp(a / "summaries.tsv"), slurp(b / "summaries.tsv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
}

TEST(Pipeline, RestagingFromSavedSummariesMatches) {
  const auto dir = fresh_dir("pipe_restage");
  const auto r = staged::run_pipeline(tiny_run(dir));
  const auto back = staged::read_trained_run(dir);
  EXPECT_EQ(back.tune_ids, r.run.tune_ids);
  EXPECT_EQ(back.test_ids, r.run.test_ids);
  EXPECT_EQ(back.summaries.size(), 7u);
  const auto o = staged::stage_run(back, 20);
  EXPECT_EQ(o.plan.stage1, r.outcome.plan.stage1);
  EXPECT_EQ(o.search.thresholds.t1, r.outcome.search.thresholds.t1);
  EXPECT_EQ(o.search.thresholds.t2, r.outcome.search.thresholds.t2);
  EXPECT_EQ(o.test_result.stage_fractions, r.outcome.test_result.stage_fractions);
  EXPECT_EQ(o.test_result.accuracy, r.outcome.test_result.accuracy);
}

TEST(Pipeline, PartitionKeepsTuningOutOfFit) {
  const auto d = staged::generate_synthetic(50, 3, {1, 1, 1}, 2);
  staged::RunConfig c;
  c.synthetic = true;
  const auto p = staged::make_partition(d, c);
  EXPECT_EQ(p.tune.size(), 7u);  // round(0.2 * 35)
  EXPECT_EQ(p.fit.size() + p.tune.size(), d.train_index.size());
  for (auto i : p.tune) EXPECT_EQ(std::count(p.fit.begin(), p.fit.end(), i), 0);
  c.tune_on_test = true;
  const auto q = staged::make_partition(d, c);
  EXPECT_EQ(q.tune, d.test_index);
  EXPECT_EQ(q.fit, d.train_index);
}
