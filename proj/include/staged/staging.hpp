#pragma once

#include "staged/errors.hpp"
#include "staged/uncertainty.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

/**
 * @file staging.hpp
 * @brief Uncertainty-gated cascade over nested view sets.
 *
 * A sample exits at stage 1 when its single-view uncertainty is <= t1,
 * otherwise at stage 2 when its two-view uncertainty is <= t2, otherwise at
 * stage 3. Its label is the voted label of the stage it exits at.
 */

namespace staged {

using ViewSet = std::vector<std::size_t>;  // sorted view ids

struct StagePlan {
  ViewSet stage1;
  ViewSet stage2;
  ViewSet stage3;

  const ViewSet& stage(std::size_t k) const { return k == 0 ? stage1 : k == 1 ? stage2 : stage3; }
};

struct StageThresholds {
  double t1 = 0.0;
  double t2 = 0.0;
};

struct StagedSample {
  std::size_t sample_id = 0;
  int exit_stage = 3;  // 1, 2 or 3
  int final_label = 0;
  double score = 0.0;  // mean AD probability at the exit stage
  std::vector<double> sigmas;  // one per visited stage
};

struct StagedResult {
  std::vector<StagedSample> samples;
  std::array<double, 3> stage_fractions{};
  std::optional<double> accuracy;  // present when truth labels were supplied
};

/// stage1 = best single view, stage2 = best pair containing it, stage3 = all.
/// Ties go to the lower view id (lexicographically smaller pair).
inline StagePlan select_stage_plan(const std::map<ViewSet, double>& accuracies, std::size_t view_count = 3) {
  if (view_count != 3) throw ConfigError("stage plans are defined for exactly three views");
  auto lookup = [&](const ViewSet& v) {
    auto it = accuracies.find(v);
    if (it == accuracies.end()) {
      std::string name;
      for (auto id : v) name += (name.empty() ? "" : "+") + std::to_string(id);
      throw DataError("missing accuracy for view configuration " + name);
    }
    return it->second;
  };
  StagePlan plan;
  std::size_t best = 0;
  for (std::size_t v = 0; v < view_count; ++v) {
    if (lookup({v}) > lookup({best})) best = v;
  }
  for (std::size_t a = 0; a < view_count; ++a)
    for (std::size_t b = a + 1; b < view_count; ++b) lookup({a, b});
  plan.stage1 = {best};
  std::optional<ViewSet> best_pair;
  for (std::size_t other = 0; other < view_count; ++other) {
    if (other == best) continue;
    ViewSet pair{std::min(best, other), std::max(best, other)};
    if (!best_pair || lookup(pair) > lookup(*best_pair)) best_pair = pair;
  }
  plan.stage2 = *best_pair;
  for (std::size_t v = 0; v < view_count; ++v) plan.stage3.push_back(v);
  return plan;
}

/// Distance of the sentinel below min(sigma). Any positive gap works; 1 keeps
/// it readable in reports.
inline constexpr double kSentinelGap = 1.0;

/// Sentinel (below every sigma, routes nobody) followed by 100 evenly spaced
/// values from min(sigma) to max(sigma) inclusive.
inline std::vector<double> threshold_grid(std::span<const double> sigmas, std::size_t steps = 100) {
  if (sigmas.empty()) throw DomainError("threshold_grid: no uncertainties");
  if (steps < 2) throw ConfigError("threshold grid needs at least 2 steps");
  const auto [lo_it, hi_it] = std::minmax_element(sigmas.begin(), sigmas.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> grid{lo - kSentinelGap};
  if (lo == hi) {
    grid.push_back(lo);
    return grid;
  }
  for (std::size_t i = 0; i < steps; ++i) {
    grid.push_back(i + 1 == steps ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1));
  }
  return grid;
}

namespace detail {
inline void check_aligned(std::span<const EnsembleSummary> s1, std::span<const EnsembleSummary> s2,
                          std::span<const EnsembleSummary> s3) {
  if (s1.size() != s2.size() || s1.size() != s3.size()) {
    throw AlignmentError("stage summaries cover " + std::to_string(s1.size()) + ", " + std::to_string(s2.size()) +
                         " and " + std::to_string(s3.size()) + " samples");
  }
  for (std::size_t i = 0; i < s1.size(); ++i) {
    if (s1[i].sample_id != s2[i].sample_id || s1[i].sample_id != s3[i].sample_id) {
      throw AlignmentError("stage summaries disagree on sample at position " + std::to_string(i));
    }
  }
}

inline int exit_stage(const EnsembleSummary& a, const EnsembleSummary& b, const StageThresholds& t) {
  if (a.sigma <= t.t1) return 1;
  if (b.sigma <= t.t2) return 2;
  return 3;
}
}  // namespace detail

struct ThresholdSearch {
  StageThresholds thresholds;
  double best_accuracy = 0.0;
};

/// Exhaustive search over threshold_grid(sigma_1) x threshold_grid(sigma_2)
/// for the routing with the highest accuracy. Accuracy ties prefer the larger
/// t1, then the larger t2.
inline ThresholdSearch optimize_thresholds(std::span<const EnsembleSummary> s1, std::span<const EnsembleSummary> s2,
                                           std::span<const EnsembleSummary> s3, std::span<const int> labels,
                                           std::size_t steps = 100) {
  detail::check_aligned(s1, s2, s3);
  if (labels.size() != s1.size()) throw AlignmentError("one label per tuning sample required");
  if (s1.empty()) throw DomainError("optimize_thresholds: no samples");

  std::vector<double> sig1, sig2;
  for (const auto& s : s1) sig1.push_back(s.sigma);
  for (const auto& s : s2) sig2.push_back(s.sigma);
  const auto grid1 = threshold_grid(sig1, steps);
  const auto grid2 = threshold_grid(sig2, steps);

  std::vector<std::array<bool, 3>> correct(s1.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    correct[i] = {s1[i].voted_label == labels[i], s2[i].voted_label == labels[i], s3[i].voted_label == labels[i]};
  }

  std::size_t best_hits = 0;
  bool have_best = false;
  StageThresholds best;
  for (double t1 : grid1) {
    for (double t2 : grid2) {
      const StageThresholds t{t1, t2};
      std::size_t hits = 0;
      for (std::size_t i = 0; i < s1.size(); ++i) {
        hits += correct[i][static_cast<std::size_t>(detail::exit_stage(s1[i], s2[i], t) - 1)] ? 1 : 0;
      }
      const bool better = !have_best || hits > best_hits ||
                          (hits == best_hits && (t1 > best.t1 || (t1 == best.t1 && t2 > best.t2)));
      if (better) {
        have_best = true;
        best_hits = hits;
        best = t;
      }
    }
  }
  return {best, static_cast<double>(best_hits) / static_cast<double>(s1.size())};
}

/// Routes every sample through the cascade. `labels` may be empty.
inline StagedResult staged_predict(std::span<const EnsembleSummary> s1, std::span<const EnsembleSummary> s2,
                                   std::span<const EnsembleSummary> s3, const StageThresholds& thresholds,
                                   std::span<const int> labels = {}) {
  detail::check_aligned(s1, s2, s3);
  if (!labels.empty() && labels.size() != s1.size()) throw AlignmentError("one label per sample required");
  StagedResult r;
  std::array<std::size_t, 3> counts{};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    StagedSample s;
    s.sample_id = s1[i].sample_id;
    s.exit_stage = detail::exit_stage(s1[i], s2[i], thresholds);
    const EnsembleSummary* stages[3] = {&s1[i], &s2[i], &s3[i]};
    for (int k = 0; k < s.exit_stage; ++k) s.sigmas.push_back(stages[k]->sigma);
    const auto& exit = *stages[s.exit_stage - 1];
    s.final_label = exit.voted_label;
    s.score = exit.mean_prob;
    ++counts[static_cast<std::size_t>(s.exit_stage - 1)];
    if (!labels.empty() && s.final_label == labels[i]) ++hits;
    r.samples.push_back(std::move(s));
  }
  if (!s1.empty()) {
    const double n = static_cast<double>(s1.size());
    r.stage_fractions = {counts[0] / n, counts[1] / n, counts[2] / n};
    if (!labels.empty()) r.accuracy = static_cast<double>(hits) / n;
  }
  return r;
}

struct CostReport {
  std::array<double, 3> cumulative{};  // cost of all views acquired through stage k
  double expected = 0.0;               // sum_k fraction_k * cumulative_k
};

/// `view_costs[v]` is the acquisition cost of view v.
inline CostReport cost_report(const StagedResult& result, const StagePlan& plan, std::span<const double> view_costs) {
  for (double c : view_costs) {
    if (!(c >= 0.0)) throw ConfigError("view costs must be non-negative");
  }
  CostReport r;
  for (std::size_t k = 0; k < 3; ++k) {
    for (auto v : plan.stage(k)) {
      if (v >= view_costs.size()) throw ConfigError("no cost given for view " + std::to_string(v));
      r.cumulative[k] += view_costs[v];
    }
    r.expected += result.stage_fractions[k] * r.cumulative[k];
  }
  return r;
}

}  // namespace staged
