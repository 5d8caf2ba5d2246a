#pragma once

#include "staged/errors.hpp"
#include "staged/train.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace staged {

/// Ensemble view of one sample across T trials.
struct EnsembleSummary {
  std::size_t sample_id = 0;
  std::vector<double> ad_probs;  // p^(t): probability of class 1 in trial t
  double mean_prob = 0.0;
  double sigma = 0.0;            // sample std, T - 1 denominator; 0 when T == 1
  int voted_label = 0;
  std::array<std::size_t, kClassCount> vote_counts{};
};

/// Hard label of a two-class distribution; an exact 0.5/0.5 tie goes to AD.
inline int hard_label(double ad_prob) noexcept { return ad_prob >= 0.5 ? 1 : 0; }

/// Mean, T-1 standard deviation and majority vote per sample. A tied vote is
/// settled by the mean probability (mean >= 0.5 votes AD).
/// `trial_labels[t]` is trial t's argmax label.
inline EnsembleSummary summarize_sample(std::size_t sample_id, std::vector<double> ad_probs,
                                        std::span<const int> trial_labels) {
  if (ad_probs.empty()) throw DomainError("summarize: no trials");
  if (trial_labels.size() != ad_probs.size()) throw ShapeError("summarize: one label per trial required");
  EnsembleSummary s;
  s.sample_id = sample_id;
  const double t = static_cast<double>(ad_probs.size());
  // shifted by the first trial so identical trials give exactly sigma = 0
  const double shift = ad_probs.front();
  double total = 0.0;
  for (double p : ad_probs) total += p - shift;
  for (int label : trial_labels) ++s.vote_counts.at(static_cast<std::size_t>(label));
  const double mean_shifted = total / t;
  s.mean_prob = shift + mean_shifted;
  if (ad_probs.size() > 1) {
    double ss = 0.0;
    for (double p : ad_probs) ss += (p - shift - mean_shifted) * (p - shift - mean_shifted);
    s.sigma = std::sqrt(ss / (t - 1.0));
  }
  if (s.vote_counts[1] != s.vote_counts[0]) {
    s.voted_label = s.vote_counts[1] > s.vote_counts[0] ? 1 : 0;
  } else {
    s.voted_label = s.mean_prob >= 0.5 ? 1 : 0;
  }
  s.ad_probs = std::move(ad_probs);
  return s;
}

/// Two-class convenience: trial labels follow from p(AD) alone.
inline EnsembleSummary summarize_sample(std::size_t sample_id, std::vector<double> ad_probs) {
  std::vector<int> labels;
  for (double p : ad_probs) labels.push_back(hard_label(p));
  return summarize_sample(sample_id, std::move(ad_probs), labels);
}

inline std::vector<EnsembleSummary> summarize_trials(std::span<const TrialOutput> trials) {
  if (trials.empty()) throw DomainError("summarize_trials: no trials");
  const auto& ids = trials.front().sample_ids;
  for (const auto& t : trials) {
    if (t.sample_ids != ids || t.probs.rows() != ids.size()) {
      throw AlignmentError("trial " + std::to_string(t.trial) + " covers a different sample set than trial " +
                           std::to_string(trials.front().trial));
    }
    if (t.probs.cols() != kClassCount) throw ShapeError("summarize_trials: expected two-class distributions");
  }
  std::vector<EnsembleSummary> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> p;
    std::vector<int> labels;
    for (const auto& t : trials) {
      p.push_back(t.probs(i, 1));
      labels.push_back(t.probs(i, 1) >= t.probs(i, 0) ? 1 : 0);
    }
    out.push_back(summarize_sample(ids[i], std::move(p), labels));
  }
  return out;
}

inline double average_uncertainty(std::span<const EnsembleSummary> summaries) {
  if (summaries.empty()) throw DomainError("average_uncertainty: no samples");
  double total = 0.0;
  for (const auto& s : summaries) total += s.sigma;
  return total / static_cast<double>(summaries.size());
}

}  // namespace staged
