#pragma once

#include "staged/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

/**
 * @file graph.hpp
 * @brief Sample-similarity graphs: cosine similarity, K-driven threshold,
 * thresholded adjacency and its symmetric self-loop normalization.
 */

namespace staged {

struct SimilarityGraph {
  std::size_t n = 0;
  double epsilon = 0.0;
  double k_target = 0.0;
  Matrix adjacency;   // zero diagonal, symmetric
  Matrix normalized;  // D^-1/2 (A + I) D^-1/2
};

inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) throw DataError("degenerate sample: zero-norm feature vector");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

namespace detail {
inline std::vector<double> row_norms(const Matrix& features) {
  std::vector<double> norms(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double s = 0.0;
    for (double v : features.row(i)) s += v * v;
    if (s == 0.0) throw DataError("degenerate sample: row " + std::to_string(i) + " has zero norm");
    norms[i] = std::sqrt(s);
  }
  return norms;
}
}  // namespace detail

/// Full n x n cosine-similarity matrix with an exact unit diagonal.
inline Matrix similarity_matrix(const Matrix& features) {
  const auto norms = detail::row_norms(features);
  const std::size_t n = features.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    auto xi = features.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xj = features.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < xi.size(); ++k) dot += xi[k] * xj[k];
      const double v = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

/// Threshold such that, on average, at least `k_target` entries per row (self
/// included) are >= it: the ceil(n * k_target)-th largest entry of the full
/// matrix. For integral n * k_target this is exactly the (n * k_target)-th.
inline double epsilon_from_k(const Matrix& similarities, double k_target) {
  const std::size_t n = similarities.rows();
  if (similarities.cols() != n) throw ShapeError("epsilon_from_k: non-square " + similarities.shape_string());
  if (!(k_target >= 1.0) || k_target > static_cast<double>(n)) {
    throw ConfigError("k_target " + std::to_string(k_target) + " outside [1, " + std::to_string(n) + "]");
  }
  // slack absorbs rounding in n * k_target
  const auto m = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * k_target - 1e-9));
  std::vector<double> all(similarities.values().begin(), similarities.values().end());
  auto nth = all.begin() + static_cast<std::ptrdiff_t>(m - 1);
  std::nth_element(all.begin(), nth, all.end(), std::greater<>());
  return *nth;
}

/// A[i][j] = s(x_i, x_j) when i != j and s >= epsilon, else 0.
inline Matrix build_adjacency(const Matrix& features, double epsilon) {
  Matrix a = similarity_matrix(features);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i == j || a(i, j) < epsilon) a(i, j) = 0.0;
    }
  }
  return a;
}

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I. Negative weights
/// (reachable only with epsilon <= 0) are treated as absent edges.
inline Matrix normalize_adjacency(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("normalize_adjacency: non-square " + a.shape_string());
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d += std::max(a(i, j), 0.0);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = i == j ? 1.0 : std::max(a(i, j), 0.0);
      if (w != 0.0) out(i, j) = inv_sqrt_deg[i] * w * inv_sqrt_deg[j];
    }
  }
  return out;
}

/// Graph over the features as-is with a threshold derived from `k_target`.
inline SimilarityGraph build_graph(const Matrix& features, double k_target) {
  SimilarityGraph g;
  g.n = features.rows();
  g.k_target = k_target;
  g.epsilon = epsilon_from_k(similarity_matrix(features), k_target);
  g.adjacency = build_adjacency(features, g.epsilon);
  g.normalized = normalize_adjacency(g.adjacency);
  return g;
}

/// One graph over train rows followed by test rows, thresholded at an
/// epsilon that was derived from the train block alone.
inline SimilarityGraph build_transductive_graph(const Matrix& train_features, const Matrix& test_features,
                                                double epsilon, double k_target = 0.0) {
  if (!test_features.empty() && train_features.cols() != test_features.cols()) {
    throw ShapeError("build_transductive_graph: train " + train_features.shape_string() + ", test " +
                     test_features.shape_string());
  }
  SimilarityGraph g;
  const Matrix all = vstack(train_features, test_features);
  g.n = all.rows();
  g.epsilon = epsilon;
  g.k_target = k_target;
  g.adjacency = build_adjacency(all, epsilon);
  g.normalized = normalize_adjacency(g.adjacency);
  return g;
}

}  // namespace staged
