#pragma once

#include "staged/numcore.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file io.hpp
 * @brief Dataset container, MOGONET-layout CSV reader/writer, and a seeded
 * Gaussian generator producing the same layout.
 *
 * Directory layout, for each view k = 1..3:
 *
 *     {k}_tr.csv        training rows, comma-separated, no header
 *     {k}_te.csv        test rows
 *     {k}_featname.csv  one feature name per line
 *     labels_tr.csv     one label per line (0 = normal control, 1 = AD)
 *     labels_te.csv
 *
 * Labels may be written as integers or as floats ("1.0e+00"); only 0 and 1
 * are accepted. The loaded sample order is all training rows followed by all
 * test rows.
 */

namespace staged {

struct OmicsView {
  std::size_t id = 0;  // zero-based
  std::string name;
  Matrix features;     // n x d, unified sample order
  std::vector<std::string> feature_names;
  double cost = 1.0;

  friend bool operator==(const OmicsView&, const OmicsView&) = default;
};

struct Dataset {
  std::vector<OmicsView> views;
  std::vector<int> labels;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;

  std::size_t sample_count() const noexcept { return labels.size(); }

  std::vector<Matrix> feature_matrices() const {
    std::vector<Matrix> out;
    for (const auto& v : views) out.push_back(v.features);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view cell, const std::string& where) {
  cell = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError(where + ": non-numeric cell '" + std::string(cell) + "'");
  }
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

inline Matrix read_feature_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<double> values;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    std::size_t count = 0;
    std::string_view rest = lines[i];
    while (true) {
      const auto comma = rest.find(',');
      values.push_back(parse_double(rest.substr(0, comma), where));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (i == 0) cols = count;
    if (count != cols) {
      throw DataError(where + ": ragged row with " + std::to_string(count) + " cells, expected " + std::to_string(cols));
    }
  }
  return Matrix(lines.size(), cols, std::move(values));
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<int> labels;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const double v = parse_double(lines[i], where);
    if (v != 0.0 && v != 1.0) throw DataError(where + ": non-binary label '" + std::string(trim(lines[i])) + "'");
    labels.push_back(v == 1.0 ? 1 : 0);
  }
  return labels;
}

inline std::vector<std::string> read_names(const std::filesystem::path& path) {
  std::vector<std::string> names;
  for (const auto& line : read_lines(path)) {
    auto cell = trim(line);
    if (const auto comma = cell.find(','); comma != std::string_view::npos) cell = trim(cell.substr(0, comma));
    names.emplace_back(cell);
  }
  return names;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir, std::size_t view_count = 3) {
  Dataset d;
  const auto labels_tr = detail::read_labels(dir / "labels_tr.csv");
  const auto labels_te = detail::read_labels(dir / "labels_te.csv");
  d.labels = labels_tr;
  d.labels.insert(d.labels.end(), labels_te.begin(), labels_te.end());
  for (std::size_t i = 0; i < labels_tr.size(); ++i) d.train_index.push_back(i);
  for (std::size_t i = 0; i < labels_te.size(); ++i) d.test_index.push_back(labels_tr.size() + i);

  for (std::size_t k = 0; k < view_count; ++k) {
    const std::string stem = std::to_string(k + 1);
    const Matrix tr = detail::read_feature_csv(dir / (stem + "_tr.csv"));
    const Matrix te = detail::read_feature_csv(dir / (stem + "_te.csv"));
    if (tr.rows() != labels_tr.size()) {
      throw DataError("row-count mismatch: " + (dir / (stem + "_tr.csv")).string() + " has " + std::to_string(tr.rows()) +
                      " rows, labels_tr.csv has " + std::to_string(labels_tr.size()));
    }
    if (te.rows() != labels_te.size()) {
      throw DataError("row-count mismatch: " + (dir / (stem + "_te.csv")).string() + " has " + std::to_string(te.rows()) +
                      " rows, labels_te.csv has " + std::to_string(labels_te.size()));
    }
    if (!tr.empty() && !te.empty() && tr.cols() != te.cols()) {
      throw DataError("view " + stem + ": train has " + std::to_string(tr.cols()) + " features, test has " +
                      std::to_string(te.cols()));
    }
    OmicsView v;
    v.id = k;
    v.name = "view" + stem;
    v.features = vstack(tr, te);
    v.feature_names = detail::read_names(dir / (stem + "_featname.csv"));
    if (v.feature_names.size() != v.features.cols()) {
      throw DataError((dir / (stem + "_featname.csv")).string() + ": " + std::to_string(v.feature_names.size()) +
                      " names for " + std::to_string(v.features.cols()) + " features");
    }
    d.views.push_back(std::move(v));
  }
  return d;
}

/// Writes `d` in the layout load_dataset reads. Requires the unified order
/// (train block then test block).
inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  auto write_rows = [&](const std::string& name, const Matrix& m, const std::vector<std::size_t>& index) {
    auto out = open(name);
    for (auto i : index) {
      auto r = m.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << detail::format_double(r[j]);
      out << '\n';
    }
  };
  auto write_labels = [&](const std::string& name, const std::vector<std::size_t>& index) {
    auto out = open(name);
    for (auto i : index) out << d.labels[i] << '\n';
  };
  for (std::size_t i = 0; i < d.train_index.size(); ++i) {
    if (d.train_index[i] != i) throw ConfigError("write_dataset: dataset is not in train-then-test order");
  }
  write_labels("labels_tr.csv", d.train_index);
  write_labels("labels_te.csv", d.test_index);
  for (const auto& v : d.views) {
    const std::string stem = std::to_string(v.id + 1);
    write_rows(stem + "_tr.csv", v.features, d.train_index);
    write_rows(stem + "_te.csv", v.features, d.test_index);
    auto names = open(stem + "_featname.csv");
    for (const auto& n : v.feature_names) names << n << '\n';
  }
}

/// Two balanced Gaussian classes per view. In view k the class means are
/// +/- (snr_k / 2) u_k for a random unit vector u_k, noise is N(0, I), so
/// snr_k is the distance between class means in noise units and the Bayes
/// accuracy of view k alone is Phi(snr_k / 2). 70% of samples train, 30% test.
inline Dataset generate_synthetic(std::size_t n, std::size_t d, std::array<double, 3> view_snrs, std::uint64_t seed) {
  if (n < 4 || n % 2 != 0) throw ConfigError("synthetic sample count must be even and >= 4");
  if (d < 1) throw ConfigError("synthetic feature count must be >= 1");
  for (double s : view_snrs) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("synthetic snr must be finite and >= 0");
  }
  Rng rng(derive_seed(seed, 0x5717));
  std::vector<int> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = i < n / 2 ? 0 : 1;
  rng.shuffle(shuffled);

  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  Dataset ds;
  ds.labels = shuffled;
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? ds.train_index : ds.test_index).push_back(i);

  for (std::size_t k = 0; k < view_snrs.size(); ++k) {
    Rng vr(derive_seed(seed, 0x1000 + k));
    std::vector<double> u(d);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : u) {
        x = vr.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;

    const double half = view_snrs[k] / 2.0;
    OmicsView v;
    v.id = k;
    v.name = "view" + std::to_string(k + 1);
    v.features = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double sign = ds.labels[i] == 1 ? 1.0 : -1.0;
      auto r = v.features.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] = sign * half * u[j] + vr.normal();
    }
    for (std::size_t j = 0; j < d; ++j) v.feature_names.push_back("v" + std::to_string(k + 1) + "_f" + std::to_string(j + 1));
    ds.views.push_back(std::move(v));
  }
  return ds;
}

}  // namespace staged
