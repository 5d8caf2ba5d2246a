#pragma once

#include "staged/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

/**
 * @file numcore.hpp
 * @brief Dense row-major matrices, the handful of differentiable ops the
 * networks need (with explicit backward functions), Adam, and a portable RNG.
 */

namespace staged {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw ShapeError("value count " + std::to_string(values_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  /// Nested-list construction, e.g. `Matrix{{1, 2}, {3, 4}}`.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged initializer list");
      values_.insert(values_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline void ensure_finite(const Matrix& m, const char* op) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

/// Standard matrix product. Zero entries of `a` are skipped, so products with
/// a sparse-in-practice adjacency cost O(nnz(a) * b.cols()).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += s * src[j];
    }
  }
  ensure_finite(out, "matmul");
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// Upstream gradient g of `a * b`, split into the two operand gradients.
struct MatmulGrad {
  Matrix da;
  Matrix db;
};

inline MatmulGrad matmul_backward(const Matrix& a, const Matrix& b, const Matrix& g) {
  return {matmul(g, transpose(b)), matmul(transpose(a), g)};
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  ensure_finite(out, "add");
  return out;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  ensure_finite(out, "scale");
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

/// Adds a 1 x cols bias row to every row of `x`.
inline Matrix add_row_bias(const Matrix& x, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_bias: " + x.shape_string() + " + " + bias.shape_string());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  ensure_finite(out, "add_row_bias");
  return out;
}

/// Gradient of a row bias: column sums of the upstream gradient.
inline Matrix column_sums(const Matrix& g) {
  Matrix out(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto r = g.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  return out;
}

inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Subgradient convention: 0 at exactly 0.
inline Matrix relu_backward(const Matrix& x, const Matrix& g) {
  require_same_shape(x, g, "relu_backward");
  Matrix out(g.rows(), g.cols());
  auto xv = x.values();
  auto gv = g.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? gv[i] : 0.0;
  return out;
}

inline Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  ensure_finite(out, "softmax_rows");
  return out;
}

/// Given p = softmax_rows(x) and upstream g = dL/dp, returns dL/dx.
inline Matrix softmax_backward(const Matrix& p, const Matrix& g) {
  require_same_shape(p, g, "softmax_backward");
  Matrix out(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto pr = p.row(i);
    auto gr = g.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < pr.size(); ++j) dot += pr[j] * gr[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) o[j] = pr[j] * (gr[j] - dot);
  }
  return out;
}

inline constexpr double kLogClamp = 1e-12;

namespace detail {
inline void check_labels(const Matrix& probs, std::span<const int> labels, const char* op) {
  if (labels.size() != probs.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(probs.rows()) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= probs.cols()) {
      throw DomainError(std::string(op) + ": label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(probs.cols()) + ")");
    }
  }
}
}  // namespace detail

/// Mean over rows of -ln(probs[row, label]), probabilities clamped at 1e-12.
inline double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  detail::check_labels(probs, labels, "cross_entropy");
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), kLogClamp));
  }
  return total / static_cast<double>(labels.size());
}

/// dL/dprobs for cross_entropy. Zero where the clamp is active.
inline Matrix cross_entropy_backward(const Matrix& probs, std::span<const int> labels) {
  detail::check_labels(probs, labels, "cross_entropy_backward");
  Matrix g(probs.rows(), probs.cols());
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const double p = probs(i, c);
    if (p > kLogClamp) g(i, c) = -1.0 / (n * p);
  }
  return g;
}

/// Row subset of `m`, in the order given.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> index) {
  Matrix out(index.size(), m.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= m.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(m.row(index[i]).begin(), m.row(index[i]).end(), out.row(i).begin());
  }
  return out;
}

/// Stacks `top` over `bottom`.
inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw ShapeError("vstack: " + top.shape_string() + " over " + bottom.shape_string());
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based SplitMix64 stream: draw i is mix64(seed + (i + 1) * golden).
/// Identical on every platform for a given seed.
class Rng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one value per call, the pair partner is discarded.
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  std::uint64_t state_;
};

inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

/// Seed for sub-stream `index` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// Parameters and Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamStore {
 public:
  struct Param {
    std::string name;
    Matrix value;
    Matrix first_moment;
    Matrix second_moment;
  };

  /// Registers a parameter; returns its index.
  std::size_t add(std::string name, Matrix value) {
    if (find(name) != npos) throw ConfigError("duplicate parameter '" + name + "'");
    Matrix zeros(value.rows(), value.cols());
    params_.push_back({std::move(name), std::move(value), zeros, zeros});
    return params_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return npos;
  }

  const Matrix& value(std::size_t i) const { return params_.at(i).value; }
  Matrix& value(std::size_t i) { return params_.at(i).value; }

  const Matrix& value(const std::string& name) const {
    const auto i = find(name);
    if (i == npos) throw ConfigError("unknown parameter '" + name + "'");
    return params_[i].value;
  }

  const Param& param(std::size_t i) const { return params_.at(i); }
  std::size_t size() const noexcept { return params_.size(); }
  std::int64_t step() const noexcept { return step_; }

  /// Zero-valued gradient buffers shaped like the parameters.
  std::vector<Matrix> zero_grads() const {
    std::vector<Matrix> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.value.rows(), p.value.cols());
    return g;
  }

  /// Values only; optimizer state is ignored.
  bool same_values(const ParamStore& other) const {
    if (other.params_.size() != params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value))
        return false;
    }
    return true;
  }

  friend void adam_step(ParamStore& store, std::span<const Matrix> grads, double lr,
                        const AdamOptions& opt);

 private:
  std::vector<Param> params_;
  std::int64_t step_ = 0;
};

/// One bias-corrected Adam update of every parameter in `store`.
inline void adam_step(ParamStore& store, std::span<const Matrix> grads, double lr,
                      const AdamOptions& opt = {}) {
  if (grads.size() != store.params_.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(store.params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require_same_shape(store.params_[i].value, grads[i], "adam_step");
    for (double g : grads[i].values()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + store.params_[i].name + "'");
    }
  }
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = store.params_[i];
    auto w = p.value.values();
    auto m = p.first_moment.values();
    auto v = p.second_moment.values();
    auto g = grads[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
    }
  }
}

}  // namespace staged
