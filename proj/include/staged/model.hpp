#pragma once

#include "staged/numcore.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

/**
 * @file model.hpp
 * @brief Per-view GCN classifiers and the view-correlation fusion head.
 *
 * A classifier stacks L graph-convolution layers H' = ReLU(A_norm H W + b)
 * and finishes with a two-layer perceptron whose softmax output is the
 * (normal control, AD) distribution. The fusion head consumes the flattened
 * outer product of the per-view distributions.
 *
 * Forward passes optionally record a tape; the matching `*_backward`
 * functions turn an upstream gradient into parameter gradients laid out in
 * the same order as the owning ParamStore.
 */

namespace staged {

inline constexpr std::size_t kClassCount = 2;

struct GcnDims {
  std::size_t input = 200;
  std::vector<std::size_t> hidden{200, 200, 100};
  std::size_t head_hidden = 64;
  std::size_t classes = kClassCount;
};

struct GcnClassifier {
  GcnDims dims;
  double dropout = 0.5;
  ParamStore params;

  std::size_t layer_count() const noexcept { return dims.hidden.size(); }

  // Parameter layout: gcn{l}.w, gcn{l}.b for each layer, then head1.w/b, head2.w/b.
  std::size_t gcn_weight_index(std::size_t l) const noexcept { return 2 * l; }
  std::size_t gcn_bias_index(std::size_t l) const noexcept { return 2 * l + 1; }
  std::size_t head_index(std::size_t k) const noexcept { return 2 * layer_count() + k; }

  const Matrix& gcn_weight(std::size_t l) const { return params.value(gcn_weight_index(l)); }
  const Matrix& gcn_bias(std::size_t l) const { return params.value(gcn_bias_index(l)); }
};

struct VcdnHead {
  std::size_t views = 2;
  std::size_t classes = kClassCount;
  ParamStore params;  // fc1.w (c^m x c^m), fc1.b, fc2.w (c^m x c), fc2.b

  std::size_t input_dim() const noexcept {
    std::size_t d = 1;
    for (std::size_t i = 0; i < views; ++i) d *= classes;
    return d;
  }
};

/// Glorot-uniform weight matrix.
inline Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

inline GcnClassifier init_classifier(const GcnDims& dims, double dropout, Rng& rng) {
  if (dims.hidden.empty()) throw ConfigError("classifier needs at least one graph layer");
  if (dims.input == 0 || dims.head_hidden == 0 || dims.classes < 2) throw ConfigError("invalid classifier dims");
  for (auto h : dims.hidden)
    if (h == 0) throw ConfigError("zero-width hidden layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");

  GcnClassifier clf;
  clf.dims = dims;
  clf.dropout = dropout;
  std::size_t fan_in = dims.input;
  for (std::size_t l = 0; l < dims.hidden.size(); ++l) {
    clf.params.add("gcn" + std::to_string(l) + ".w", glorot(fan_in, dims.hidden[l], rng));
    clf.params.add("gcn" + std::to_string(l) + ".b", Matrix(1, dims.hidden[l]));
    fan_in = dims.hidden[l];
  }
  clf.params.add("head1.w", glorot(fan_in, dims.head_hidden, rng));
  clf.params.add("head1.b", Matrix(1, dims.head_hidden));
  clf.params.add("head2.w", glorot(dims.head_hidden, dims.classes, rng));
  clf.params.add("head2.b", Matrix(1, dims.classes));
  return clf;
}

inline VcdnHead init_vcdn(std::size_t views, std::size_t classes, Rng& rng) {
  if (views < 2 || views > 3) throw ConfigError("fusion head supports 2 or 3 views");
  VcdnHead head;
  head.views = views;
  head.classes = classes;
  const std::size_t d = head.input_dim();
  head.params.add("fc1.w", glorot(d, d, rng));
  head.params.add("fc1.b", Matrix(1, d));
  head.params.add("fc2.w", glorot(d, classes, rng));
  head.params.add("fc2.b", Matrix(1, classes));
  return head;
}

// ---------------------------------------------------------------------------
// Graph convolution stack
// ---------------------------------------------------------------------------

struct GcnTape {
  std::vector<Matrix> inputs;  // H^(l)
  std::vector<Matrix> pre;     // A_norm H W + b, before ReLU
  std::vector<Matrix> masks;   // inverted-dropout scale; empty when not training
};

inline Matrix gcn_forward(const Matrix& x, const Matrix& a_norm, const GcnClassifier& clf, bool training,
                          Rng* rng = nullptr, GcnTape* tape = nullptr) {
  if (a_norm.rows() != x.rows() || a_norm.cols() != x.rows()) {
    throw ShapeError("gcn_forward: adjacency " + a_norm.shape_string() + " for features " + x.shape_string());
  }
  const bool drop = training && clf.dropout > 0.0;
  if (drop && rng == nullptr) throw ConfigError("gcn_forward: training with dropout needs an rng");
  if (tape) *tape = {};
  Matrix h = x;
  for (std::size_t l = 0; l < clf.layer_count(); ++l) {
    Matrix z = add_row_bias(matmul(a_norm, matmul(h, clf.gcn_weight(l))), clf.gcn_bias(l));
    Matrix out = relu(z);
    Matrix mask;
    if (drop) {
      const double keep_scale = 1.0 / (1.0 - clf.dropout);
      mask = Matrix(out.rows(), out.cols());
      for (double& m : mask.values()) m = rng->uniform() < clf.dropout ? 0.0 : keep_scale;
      out = hadamard(out, mask);
    }
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(std::move(z));
      tape->masks.push_back(std::move(mask));
    }
    h = std::move(out);
  }
  return h;
}

/// Accumulates graph-layer gradients into `grads` (ParamStore order) and
/// returns dL/dX.
inline Matrix gcn_backward(const Matrix& a_norm, const GcnClassifier& clf, const GcnTape& tape, Matrix g,
                           std::vector<Matrix>& grads) {
  const Matrix a_t = transpose(a_norm);
  for (std::size_t l = clf.layer_count(); l-- > 0;) {
    if (!tape.masks[l].empty()) g = hadamard(g, tape.masks[l]);
    g = relu_backward(tape.pre[l], g);
    grads[clf.gcn_bias_index(l)] = add(grads[clf.gcn_bias_index(l)], column_sums(g));
    const Matrix d_hw = matmul(a_t, g);
    grads[clf.gcn_weight_index(l)] = add(grads[clf.gcn_weight_index(l)], matmul(transpose(tape.inputs[l]), d_hw));
    g = matmul(d_hw, transpose(clf.gcn_weight(l)));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Two-layer perceptron heads (shared by the classifier head and fusion head)
// ---------------------------------------------------------------------------

struct MlpTape {
  Matrix input;
  Matrix pre_hidden;
  Matrix hidden;
  Matrix probs;
};

namespace detail {
inline Matrix mlp_forward(const Matrix& in, const Matrix& w1, const Matrix& b1, const Matrix& w2, const Matrix& b2,
                          MlpTape* tape) {
  Matrix z1 = add_row_bias(matmul(in, w1), b1);
  Matrix r1 = relu(z1);
  Matrix probs = softmax_rows(add_row_bias(matmul(r1, w2), b2));
  if (tape) {
    tape->input = in;
    tape->pre_hidden = std::move(z1);
    tape->hidden = std::move(r1);
    tape->probs = probs;
  }
  return probs;
}

/// Gradients for (w1, b1, w2, b2) are added into grads[first .. first+3]; returns dL/dinput.
inline Matrix mlp_backward(const Matrix& w1, const Matrix& w2, const MlpTape& tape, const Matrix& d_probs,
                           std::vector<Matrix>& grads, std::size_t first) {
  const Matrix d_logits = softmax_backward(tape.probs, d_probs);
  grads[first + 3] = add(grads[first + 3], column_sums(d_logits));
  grads[first + 2] = add(grads[first + 2], matmul(transpose(tape.hidden), d_logits));
  Matrix d_hidden = relu_backward(tape.pre_hidden, matmul(d_logits, transpose(w2)));
  grads[first + 1] = add(grads[first + 1], column_sums(d_hidden));
  grads[first] = add(grads[first], matmul(transpose(tape.input), d_hidden));
  return matmul(d_hidden, transpose(w1));
}
}  // namespace detail

/// softmax(ReLU(h W1 + b1) W2 + b2); column 0 = normal control, 1 = AD.
inline Matrix classify(const Matrix& h, const GcnClassifier& clf, MlpTape* tape = nullptr) {
  const auto i = clf.head_index(0);
  return detail::mlp_forward(h, clf.params.value(i), clf.params.value(i + 1), clf.params.value(i + 2),
                             clf.params.value(i + 3), tape);
}

/// Full per-view pass: graph stack then head.
struct ViewTape {
  GcnTape gcn;
  MlpTape head;
};

inline Matrix view_forward(const Matrix& x, const Matrix& a_norm, const GcnClassifier& clf, bool training,
                           Rng* rng = nullptr, ViewTape* tape = nullptr) {
  Matrix h = gcn_forward(x, a_norm, clf, training, rng, tape ? &tape->gcn : nullptr);
  return classify(h, clf, tape ? &tape->head : nullptr);
}

/// Parameter gradients (ParamStore order) of a loss whose gradient with
/// respect to the view's output distribution is `d_probs`.
inline std::vector<Matrix> view_backward(const Matrix& a_norm, const GcnClassifier& clf, const ViewTape& tape,
                                         const Matrix& d_probs) {
  auto grads = clf.params.zero_grads();
  const auto i = clf.head_index(0);
  Matrix dh = detail::mlp_backward(clf.params.value(i), clf.params.value(i + 2), tape.head, d_probs, grads, i);
  gcn_backward(a_norm, clf, tape.gcn, std::move(dh), grads);
  return grads;
}

// ---------------------------------------------------------------------------
// Cross-view discovery tensor and fusion head
// ---------------------------------------------------------------------------

namespace detail {
inline void check_distribution(std::span<const double> p, double tol) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= -tol) || !std::isfinite(v)) throw DomainError("distribution has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw DomainError("distribution sums to " + std::to_string(s) + ", not 1");
}
}  // namespace detail

/// Outer product of m in {2, 3} distributions, flattened row-major with the
/// first view's class index varying slowest.
inline std::vector<double> vcdn_tensor(std::span<const std::vector<double>> dists) {
  if (dists.size() < 2 || dists.size() > 3) throw DomainError("discovery tensor needs 2 or 3 distributions");
  for (const auto& d : dists) detail::check_distribution(d, 1e-6);
  std::vector<double> out{1.0};
  for (const auto& d : dists) {
    std::vector<double> next;
    next.reserve(out.size() * d.size());
    for (double a : out)
      for (double b : d) next.push_back(a * b);
    out = std::move(next);
  }
  return out;
}

/// Row-wise discovery tensor: row i is vcdn_tensor of row i of each view.
inline Matrix vcdn_tensor_rows(std::span<const Matrix> view_probs) {
  if (view_probs.size() < 2 || view_probs.size() > 3) throw DomainError("discovery tensor needs 2 or 3 views");
  const std::size_t n = view_probs[0].rows();
  std::size_t width = 1;
  for (const auto& p : view_probs) {
    if (p.rows() != n) throw ShapeError("vcdn_tensor_rows: view row counts differ");
    width *= p.cols();
  }
  Matrix out(n, width);
  std::vector<std::vector<double>> dists(view_probs.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < view_probs.size(); ++k) {
      auto r = view_probs[k].row(i);
      dists[k].assign(r.begin(), r.end());
    }
    const auto t = vcdn_tensor(dists);
    std::copy(t.begin(), t.end(), out.row(i).begin());
  }
  return out;
}

/// Gradient of the flattened tensor with respect to each view's distribution.
inline std::vector<Matrix> vcdn_tensor_backward(std::span<const Matrix> view_probs, const Matrix& d_tensor) {
  const std::size_t m = view_probs.size();
  const std::size_t n = d_tensor.rows();
  std::vector<Matrix> grads;
  for (const auto& p : view_probs) grads.emplace_back(n, p.cols());
  std::vector<std::size_t> strides(m, 1);
  for (std::size_t k = m - 1; k-- > 0;) strides[k] = strides[k + 1] * view_probs[k + 1].cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t flat = 0; flat < d_tensor.cols(); ++flat) {
      const double g = d_tensor(i, flat);
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < m; ++k) {
        // product of the other views' factors at this multi-index
        double others = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == k) continue;
          others *= view_probs[j](i, (flat / strides[j]) % view_probs[j].cols());
        }
        grads[k](i, (flat / strides[k]) % view_probs[k].cols()) += g * others;
      }
    }
  }
  return grads;
}

inline Matrix vcdn_forward(const Matrix& c_vec, const VcdnHead& head, MlpTape* tape = nullptr) {
  if (c_vec.cols() != head.input_dim()) {
    throw ShapeError("vcdn_forward: input " + c_vec.shape_string() + " for head expecting " +
                     std::to_string(head.input_dim()) + " columns");
  }
  return detail::mlp_forward(c_vec, head.params.value(0), head.params.value(1), head.params.value(2),
                             head.params.value(3), tape);
}

struct VcdnGrad {
  std::vector<Matrix> params;  // ParamStore order
  Matrix d_input;
};

inline VcdnGrad vcdn_backward(const VcdnHead& head, const MlpTape& tape, const Matrix& d_probs) {
  VcdnGrad out;
  out.params = head.params.zero_grads();
  out.d_input = detail::mlp_backward(head.params.value(0), head.params.value(2), tape, d_probs, out.params, 0);
  return out;
}

}  // namespace staged
