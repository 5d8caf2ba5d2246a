#pragma once

#include "staged/errors.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace staged {

/// Positive class is AD (label 1).
struct MetricsReport {
  double acc = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  std::size_t n = 0;
};

namespace detail {
inline void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw DataError(std::string(what) + ": empty input");
}
}  // namespace detail

inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  detail::check_pair(pred.size(), truth.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// 2TP / (2TP + FP + FN), 0 when nothing is positive on either side.
inline double f1(std::span<const int> pred, std::span<const int> truth) {
  detail::check_pair(pred.size(), truth.size(), "f1");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (truth[i] == 1) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

/// Mann-Whitney AUC via midranks; ties between a positive and a negative
/// score earn half credit.
inline double auc(std::span<const double> scores, std::span<const int> truth) {
  detail::check_pair(scores.size(), truth.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == 1) {
        pos_rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DomainError("auc undefined: truth contains a single class");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

inline MetricsReport evaluate(std::span<const int> pred, std::span<const double> scores, std::span<const int> truth) {
  MetricsReport r;
  r.acc = accuracy(pred, truth);
  r.f1 = f1(pred, truth);
  r.auc = auc(scores, truth);
  r.n = truth.size();
  return r;
}

}  // namespace staged
