#pragma once

#include "staged/graph.hpp"
#include "staged/model.hpp"
#include "staged/numcore.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

/**
 * @file train.hpp
 * @brief Full-batch training of per-view classifiers, alternating joint
 * optimization with the fusion head, and seeded trial ensembles.
 *
 * Node ordering convention: every graph handed to these functions lists the
 * labelled (fit) nodes first, so `labels[i]` belongs to row i for
 * i < labels.size(). Remaining rows take part in message passing only.
 */

namespace staged {

struct TrainConfig {
  double lr = 1e-3;        // per-view classifiers
  double vcdn_lr = 1e-3;   // fusion head
  std::size_t pretrain_epochs = 500;
  std::size_t joint_epochs = 2500;
  std::size_t trials = 10;
  double k_target = 2.0;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> view_subset;  // indices into the dataset's views
  std::vector<std::size_t> hidden{200, 200, 100};
  std::size_t head_hidden = 64;
  bool update_gcns = true;  // joint step (a); off only for schedule tests

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(lr >= 0.0) || !(vcdn_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (!(k_target >= 1.0)) throw ConfigError("k_target must be >= 1");
    if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  }
};

/// Per-epoch losses. Rows are appended in training order.
struct TrainLog {
  struct Row {
    std::string phase;  // "pretrain" or "joint"
    std::size_t epoch = 0;
    std::vector<double> view_losses;  // one per view; pretrain rows carry one entry
    std::size_t view = 0;             // pretrain rows: which view the single loss belongs to
    double vcdn_loss = std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
  };
  std::vector<Row> rows;
};

struct JointModel {
  std::vector<GcnClassifier> classifiers;
  VcdnHead head;
};

struct TrialOutput {
  std::size_t trial = 0;
  std::vector<std::size_t> sample_ids;  // eval samples, row order of the matrices below
  Matrix probs;                         // final model: classifier head (1 view) or fusion head
  std::vector<Matrix> view_probs;       // per-view classifier outputs
};

namespace detail {
inline void check_divergence(double loss, const char* phase, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("training diverged: non-finite loss in ") + phase + " epoch " + std::to_string(epoch));
  }
}

/// Cross-entropy on the first labels.size() rows and its gradient over all rows.
struct LabelledLoss {
  double loss;
  Matrix d_probs;
};

inline LabelledLoss labelled_cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (labels.size() > probs.rows()) throw ShapeError("more labels than graph nodes");
  Matrix head(labels.size(), probs.cols());
  std::copy(probs.values().begin(), probs.values().begin() + static_cast<std::ptrdiff_t>(head.size()),
            head.values().begin());
  LabelledLoss out{cross_entropy(head, labels), Matrix(probs.rows(), probs.cols())};
  const Matrix g = cross_entropy_backward(head, labels);
  std::copy(g.values().begin(), g.values().end(), out.d_probs.values().begin());
  return out;
}

inline GcnDims dims_for(std::size_t input, const TrainConfig& cfg) {
  GcnDims d;
  d.input = input;
  d.hidden = cfg.hidden;
  d.head_hidden = cfg.head_hidden;
  return d;
}
}  // namespace detail

/// Trains a fresh classifier on one view: `pretrain_epochs` full-batch Adam
/// steps on the cross-entropy of the labelled nodes.
inline GcnClassifier pretrain_view(const Matrix& features, const Matrix& a_norm, std::span<const int> labels,
                                   const TrainConfig& cfg, Rng& rng, TrainLog* log = nullptr) {
  GcnClassifier clf = init_classifier(detail::dims_for(features.cols(), cfg), cfg.dropout, rng);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    ViewTape tape;
    const Matrix probs = view_forward(features, a_norm, clf, true, &rng, &tape);
    const auto ll = detail::labelled_cross_entropy(probs, labels);
    detail::check_divergence(ll.loss, "pretrain", epoch);
    if (log) log->rows.push_back({.phase = "pretrain", .epoch = epoch, .view_losses = {ll.loss}, .total = ll.loss});
    const auto grads = view_backward(a_norm, clf, tape, ll.d_probs);
    adam_step(clf.params, grads, cfg.lr);
  }
  return clf;
}

/// Total joint loss sum_k L_view(k) + L_fusion with deterministic (inference) forwards.
struct JointLoss {
  std::vector<double> view_losses;
  double vcdn_loss = 0.0;
  double total = 0.0;
};

inline JointLoss evaluate_joint_loss(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                                     std::span<const int> labels, const JointModel& model) {
  JointLoss out;
  std::vector<Matrix> probs;
  for (std::size_t k = 0; k < model.classifiers.size(); ++k) {
    probs.push_back(view_forward(features[k], a_norms[k], model.classifiers[k], false));
    out.view_losses.push_back(detail::labelled_cross_entropy(probs.back(), labels).loss);
    out.total += out.view_losses.back();
  }
  const Matrix fused = vcdn_forward(vcdn_tensor_rows(probs), model.head);
  out.vcdn_loss = detail::labelled_cross_entropy(fused, labels).loss;
  out.total += out.vcdn_loss;
  return out;
}

namespace detail {
struct JointPass {
  std::vector<ViewTape> view_tapes;
  std::vector<Matrix> view_probs;
  MlpTape head_tape;
  JointLoss loss;
  std::vector<Matrix> d_view_probs;  // per-view dL/dprobs from the view loss only
  Matrix d_fused;                    // dL/dfused from the fusion loss
};

inline JointPass joint_forward(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                               std::span<const int> labels, const JointModel& model, Rng& rng) {
  JointPass pass;
  const std::size_t m = model.classifiers.size();
  pass.view_tapes.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    pass.view_probs.push_back(view_forward(features[k], a_norms[k], model.classifiers[k], true, &rng, &pass.view_tapes[k]));
    auto ll = labelled_cross_entropy(pass.view_probs.back(), labels);
    pass.loss.view_losses.push_back(ll.loss);
    pass.loss.total += ll.loss;
    pass.d_view_probs.push_back(std::move(ll.d_probs));
  }
  const Matrix fused = vcdn_forward(vcdn_tensor_rows(pass.view_probs), model.head, &pass.head_tape);
  auto ll = labelled_cross_entropy(fused, labels);
  pass.loss.vcdn_loss = ll.loss;
  pass.loss.total += ll.loss;
  pass.d_fused = std::move(ll.d_probs);
  return pass;
}
}  // namespace detail

/// Parameter gradients of the joint loss for every classifier and the fusion
/// head, evaluated at deterministic forwards. Used for gradient checking.
struct JointGrads {
  std::vector<std::vector<Matrix>> classifiers;
  std::vector<Matrix> head;
};

inline JointGrads joint_gradients(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                                  std::span<const int> labels, const JointModel& model) {
  JointModel frozen = model;
  for (auto& c : frozen.classifiers) c.dropout = 0.0;
  Rng unused(0);
  auto pass = detail::joint_forward(features, a_norms, labels, frozen, unused);
  const auto vg = vcdn_backward(frozen.head, pass.head_tape, pass.d_fused);
  const auto d_views = vcdn_tensor_backward(pass.view_probs, vg.d_input);
  JointGrads out;
  out.head = vg.params;
  for (std::size_t k = 0; k < frozen.classifiers.size(); ++k) {
    out.classifiers.push_back(
        view_backward(a_norms[k], frozen.classifiers[k], pass.view_tapes[k], add(pass.d_view_probs[k], d_views[k])));
  }
  return out;
}

/// Joint step (a): fusion head frozen, one Adam step per classifier on the
/// total loss. Returns the losses of the forward pass it stepped from.
inline JointLoss joint_step_classifiers(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                                        std::span<const int> labels, JointModel& model, const TrainConfig& cfg,
                                        Rng& rng, std::size_t epoch) {
  auto pass = detail::joint_forward(features, a_norms, labels, model, rng);
  detail::check_divergence(pass.loss.total, "joint", epoch);
  if (!cfg.update_gcns) return pass.loss;
  const auto vg = vcdn_backward(model.head, pass.head_tape, pass.d_fused);
  const auto d_views = vcdn_tensor_backward(pass.view_probs, vg.d_input);
  for (std::size_t k = 0; k < model.classifiers.size(); ++k) {
    const auto grads =
        view_backward(a_norms[k], model.classifiers[k], pass.view_tapes[k], add(pass.d_view_probs[k], d_views[k]));
    adam_step(model.classifiers[k].params, grads, cfg.lr);
  }
  return pass.loss;
}

/// Joint step (b): classifiers frozen, one Adam step on the fusion head. The
/// view-loss terms are constant here.
inline void joint_step_fusion(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                              std::span<const int> labels, JointModel& model, const TrainConfig& cfg, Rng& rng,
                              std::size_t epoch) {
  auto pass = detail::joint_forward(features, a_norms, labels, model, rng);
  detail::check_divergence(pass.loss.total, "joint", epoch);
  const auto vg = vcdn_backward(model.head, pass.head_tape, pass.d_fused);
  adam_step(model.head.params, vg.params, cfg.vcdn_lr);
}

/// Alternating optimization starting from pre-trained classifiers: each
/// epoch runs step (a) then step (b).
inline JointModel train_joint(std::span<const Matrix> features, std::span<const Matrix> a_norms,
                              std::span<const int> labels, std::vector<GcnClassifier> pretrained,
                              const TrainConfig& cfg, Rng& rng, TrainLog* log = nullptr) {
  const std::size_t m = pretrained.size();
  if (m < 2 || m > 3) throw ConfigError("joint training needs 2 or 3 views");
  if (features.size() != m || a_norms.size() != m) throw ShapeError("train_joint: view count mismatch");

  JointModel model{std::move(pretrained), init_vcdn(m, kClassCount, rng)};
  for (std::size_t epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
    const JointLoss loss = joint_step_classifiers(features, a_norms, labels, model, cfg, rng, epoch);
    if (log) log->rows.push_back({.phase = "joint",
                                 .epoch = epoch,
                                 .view_losses = loss.view_losses,
                                 .vcdn_loss = loss.vcdn_loss,
                                 .total = loss.total});
    joint_step_fusion(features, a_norms, labels, model, cfg, rng, epoch);
  }
  return model;
}

/// Features and graphs for one view configuration, fit nodes first.
struct TrialInputs {
  std::vector<Matrix> features;  // per selected view, (n_fit + n_eval) x d_k
  std::vector<SimilarityGraph> graphs;
  std::vector<int> fit_labels;
  std::vector<std::size_t> eval_ids;
};

/// Builds per-view transductive graphs. Each threshold comes from the fit block alone.
inline TrialInputs prepare_trial_inputs(std::span<const Matrix> all_features, std::span<const int> all_labels,
                                        std::span<const std::size_t> fit_index,
                                        std::span<const std::size_t> eval_index,
                                        std::span<const std::size_t> view_subset, double k_target) {
  if (view_subset.empty()) throw ConfigError("view subset is empty");
  TrialInputs in;
  for (auto i : fit_index) {
    if (i >= all_labels.size()) throw ShapeError("fit index out of range");
    in.fit_labels.push_back(all_labels[i]);
  }
  in.eval_ids.assign(eval_index.begin(), eval_index.end());
  for (auto v : view_subset) {
    if (v >= all_features.size()) throw ConfigError("view " + std::to_string(v) + " does not exist");
    const Matrix fit = gather_rows(all_features[v], fit_index);
    const Matrix eval = gather_rows(all_features[v], eval_index);
    const double eps = epsilon_from_k(similarity_matrix(fit), k_target);
    in.graphs.push_back(build_transductive_graph(fit, eval, eps, k_target));
    in.features.push_back(vstack(fit, eval));
  }
  return in;
}

/// Trained weights of one trial; `head` is set for multi-view configurations.
struct TrialModels {
  std::vector<GcnClassifier> classifiers;
  std::optional<VcdnHead> head;
};

/// Trains trial `t` from scratch (seed derived from cfg.seed and t) and
/// returns its eval-node distributions.
inline TrialOutput run_trial(const TrialInputs& in, const TrainConfig& cfg, std::size_t t, TrainLog* log = nullptr,
                             TrialModels* models = nullptr) {
  Rng rng(derive_seed(cfg.seed, t));
  std::vector<Matrix> a_norms;
  for (const auto& g : in.graphs) a_norms.push_back(g.normalized);
  std::vector<GcnClassifier> clfs;
  for (std::size_t k = 0; k < in.features.size(); ++k) {
    const std::size_t first = log ? log->rows.size() : 0;
    clfs.push_back(pretrain_view(in.features[k], a_norms[k], in.fit_labels, cfg, rng, log));
    if (log)
      for (std::size_t r = first; r < log->rows.size(); ++r) log->rows[r].view = k;
  }

  TrialOutput out;
  out.trial = t;
  out.sample_ids = in.eval_ids;
  const std::size_t n_fit = in.fit_labels.size();
  std::vector<std::size_t> eval_rows(in.eval_ids.size());
  for (std::size_t i = 0; i < eval_rows.size(); ++i) eval_rows[i] = n_fit + i;

  std::vector<Matrix> full_probs;
  if (clfs.size() == 1) {
    full_probs.push_back(view_forward(in.features[0], a_norms[0], clfs[0], false));
    out.probs = gather_rows(full_probs[0], eval_rows);
    if (models) *models = {std::move(clfs), std::nullopt};
  } else {
    const JointModel model = train_joint(in.features, a_norms, in.fit_labels, std::move(clfs), cfg, rng, log);
    for (std::size_t k = 0; k < model.classifiers.size(); ++k) {
      full_probs.push_back(view_forward(in.features[k], a_norms[k], model.classifiers[k], false));
    }
    out.probs = gather_rows(vcdn_forward(vcdn_tensor_rows(full_probs), model.head), eval_rows);
    if (models) *models = {model.classifiers, model.head};
  }
  for (const auto& p : full_probs) out.view_probs.push_back(gather_rows(p, eval_rows));
  return out;
}

/// T independent retrains of the configuration in cfg.view_subset, ordered by trial index.
inline std::vector<TrialOutput> run_trials(std::span<const Matrix> all_features, std::span<const int> all_labels,
                                           std::span<const std::size_t> fit_index,
                                           std::span<const std::size_t> eval_index, const TrainConfig& cfg) {
  cfg.validate();
  const TrialInputs in =
      prepare_trial_inputs(all_features, all_labels, fit_index, eval_index, cfg.view_subset, cfg.k_target);
  std::vector<TrialOutput> out;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    try {
      out.push_back(run_trial(in, cfg, t));
    } catch (const NumericError& e) {
      throw NumericError("trial " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

/// One delimited log line: phase, epoch, a loss column per view, fusion loss, total.
/// Absent values are left empty.
inline std::string format_log_row(const TrainLog::Row& r, std::size_t view_count) {
  std::ostringstream out;
  out.precision(10);
  out << r.phase << '\t' << r.epoch;
  for (std::size_t k = 0; k < view_count; ++k) {
    out << '\t';
    if (r.phase == "pretrain") {
      if (k == r.view && !r.view_losses.empty()) out << r.view_losses[0];
    } else if (k < r.view_losses.size()) {
      out << r.view_losses[k];
    }
  }
  out << '\t';
  if (std::isfinite(r.vcdn_loss)) out << r.vcdn_loss;
  out << '\t' << r.total;
  return out.str();
}

inline std::string train_log_header(std::size_t view_count) {
  std::string h = "phase\tepoch";
  for (std::size_t k = 0; k < view_count; ++k) h += "\tloss_view" + std::to_string(k + 1);
  return h + "\tloss_vcdn\ttotal";
}

inline void write_train_log(std::ostream& out, const TrainLog& log, std::size_t view_count) {
  out << train_log_header(view_count) << '\n';
  for (const auto& r : log.rows) out << format_log_row(r, view_count) << '\n';
}

}  // namespace staged
