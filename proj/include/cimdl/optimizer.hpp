#pragma once

// Alternating gradient descent over V_i, Q_i, W and the adaptive weights c.

#include "cimdl/core.hpp"
#include "cimdl/model.hpp"
#include "cimdl/objective.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cimdl {

enum class InitScheme { SplitIdentity, SeededUniform };

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "split-identity") return InitScheme::SplitIdentity;
  if (s == "seeded-uniform") return InitScheme::SeededUniform;
  throw ValidationError("unknown init scheme '" + s + "' (expected split-identity or seeded-uniform)");
}

inline const char* to_string(InitScheme s) {
  return s == InitScheme::SplitIdentity ? "split-identity" : "seeded-uniform";
}

constexpr double kInitNoise = 1e-2;

/// Initial model with zero classifier and uniform adaptive weights.
///
/// split-identity: V_i keeps the first ceil(M/2) coordinates and Q_i the rest,
/// so V^T V + Q^T Q = I before the optional uniform noise of amplitude 1e-2 is
/// added to every entry. seeded-uniform: V_i, Q_i entries uniform in
/// [-1/sqrt(M), 1/sqrt(M)].
inline FusionModel init_model(Index dim, Index classes, InitScheme scheme, std::uint64_t seed,
                              bool noise = true) {
  if (dim < 2) throw ValidationError("init_model: dimension must be >= 2, got " + std::to_string(dim));
  if (classes < 2) throw ValidationError("init_model: need >= 2 classes, got " + std::to_string(classes));

  std::mt19937_64 rng(seed);
  FusionModel model;
  if (scheme == InitScheme::SplitIdentity) {
    const Index head = (dim + 1) / 2;
    Matrix v = Matrix::Zero(dim, dim);
    Matrix q = Matrix::Zero(dim, dim);
    v.diagonal().head(head).setOnes();
    q.diagonal().tail(dim - head).setOnes();
    model.modality1 = {v, q};
    model.modality2 = {v, q};
    if (noise) {
      std::uniform_real_distribution<double> jitter(-kInitNoise, kInitNoise);
      for (Matrix* m : {&model.modality1.correlated, &model.modality1.individual,
                        &model.modality2.correlated, &model.modality2.individual}) {
        for (Index j = 0; j < dim; ++j)
          for (Index i = 0; i < dim; ++i) (*m)(i, j) += jitter(rng);
      }
    }
  } else {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto draw = [&] {
      Matrix m(dim, dim);
      for (Index j = 0; j < dim; ++j)
        for (Index i = 0; i < dim; ++i) m(i, j) = u(rng);
      return m;
    };
    model.modality1.correlated = draw();
    model.modality1.individual = draw();
    model.modality2.correlated = draw();
    model.modality2.individual = draw();
  }
  for (auto& w : model.classifier) w = Matrix::Zero(classes, dim);
  model.weights = Weights::Constant(1.0 / 3.0);
  return model;
}

/// Defaults scaled by training-set size N and feature size M.
inline Hyperparameters default_hyperparameters(Index dim, Index samples) {
  if (dim < 1 || samples < 1) throw ValidationError("hyperparameters: M and N must be >= 1");
  const double m = static_cast<double>(dim);
  const double n = static_cast<double>(samples);
  Hyperparameters hp;
  hp.alpha1 = hp.alpha2 = 0.5 / n;
  hp.sigma1 = hp.sigma2 = 0.5 / m;
  hp.mu = 10.0 / n;
  hp.delta1 = hp.delta2 = 0.005 / n;
  hp.theta1 = hp.theta2 = 0.005 / n;
  hp.eta = 1.0;
  hp.lr_w = 1e-3;
  hp.lr_vq = 1e-5;
  hp.p = 1.0;
  hp.max_iters = 500;
  hp.tol = 1e-6;
  hp.weight_mode = WeightMode::Paper;
  hp.seed = 0;
  return hp;
}

/// key -> value; the value "auto" keeps the size-derived default.
using ParameterOverrides = std::map<std::string, std::string>;

namespace detail {

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("parameter '" + key + "': '" + text + "' is not a finite number");
  }
  return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("parameter '" + key + "': '" + text + "' is not a non-negative integer");
  }
  return v;
}

}  // namespace detail

/// Applies `overrides` on top of the size-derived defaults.
///
/// Accepted keys: alpha1 alpha2 alpha sigma1 sigma2 sigma delta1 delta2 delta
/// theta1 theta2 theta mu eta lr_w lr_vq p max_iters tol weight_mode seed.
/// The un-suffixed forms set both modalities.
inline Hyperparameters resolve_hyperparameters(Index dim, Index samples,
                                               const ParameterOverrides& overrides = {}) {
  Hyperparameters hp = default_hyperparameters(dim, samples);
  const std::map<std::string, std::vector<double*>> reals = {
      {"alpha1", {&hp.alpha1}}, {"alpha2", {&hp.alpha2}}, {"alpha", {&hp.alpha1, &hp.alpha2}},
      {"sigma1", {&hp.sigma1}}, {"sigma2", {&hp.sigma2}}, {"sigma", {&hp.sigma1, &hp.sigma2}},
      {"delta1", {&hp.delta1}}, {"delta2", {&hp.delta2}}, {"delta", {&hp.delta1, &hp.delta2}},
      {"theta1", {&hp.theta1}}, {"theta2", {&hp.theta2}}, {"theta", {&hp.theta1, &hp.theta2}},
      {"mu", {&hp.mu}},         {"eta", {&hp.eta}},       {"lr_w", {&hp.lr_w}},
      {"lr_vq", {&hp.lr_vq}},   {"p", {&hp.p}},           {"tol", {&hp.tol}},
  };
  for (const auto& [key, text] : overrides) {
    if (text == "auto") {
      if (!reals.contains(key) && key != "max_iters" && key != "weight_mode" && key != "seed") {
        throw ValidationError("unknown parameter '" + key + "'");
      }
      continue;
    }
    if (auto it = reals.find(key); it != reals.end()) {
      const double v = detail::parse_double(key, text);
      if (v < 0.0) throw ValidationError("parameter '" + key + "' must be >= 0, got " + text);
      for (double* target : it->second) *target = v;
    } else if (key == "max_iters") {
      hp.max_iters = detail::parse_count(key, text);
    } else if (key == "seed") {
      hp.seed = detail::parse_count(key, text);
    } else if (key == "weight_mode") {
      hp.weight_mode = parse_weight_mode(text);
    } else {
      throw ValidationError("unknown parameter '" + key + "'");
    }
  }
  hp.validate();
  return hp;
}

/// One gradient step on V1, V2 followed by one on Q1, Q2 (at the updated V).
inline FusionModel step_projections(const FusionModel& model, const FeatureBatch& x1,
                                    const FeatureBatch& x2, const LabelMatrix& labels,
                                    const Hyperparameters& hp) {
  detail::require_training_inputs(model, x1, x2, labels, "step_projections");
  FusionModel next = model;
  const Matrix resid = detail::residual_if_needed(model, x1, x2, labels, hp.mu);
  const Matrix gv1 = detail::grad_V_from_residual(model, x1, x2, resid, hp, 1);
  const Matrix gv2 = detail::grad_V_from_residual(model, x1, x2, resid, hp, 2);
  next.modality1.correlated -= hp.lr_vq * gv1;
  next.modality2.correlated -= hp.lr_vq * gv2;

  const Matrix resid_v = detail::residual_if_needed(next, x1, x2, labels, hp.mu);
  const Matrix gq1 = detail::grad_Q_from_residual(next, x1, x2, resid_v, hp, 1);
  const Matrix gq2 = detail::grad_Q_from_residual(next, x1, x2, resid_v, hp, 2);
  next.modality1.individual -= hp.lr_vq * gq1;
  next.modality2.individual -= hp.lr_vq * gq2;
  return next;
}

inline FusionModel step_classifier(const FusionModel& model, const FeatureBatch& x1,
                                   const FeatureBatch& x2, const LabelMatrix& labels,
                                   const Hyperparameters& hp) {
  FusionModel next = model;
  next.set_stacked_classifier(model.stacked_classifier() - hp.lr_w * grad_W(model, x1, x2, labels, hp));
  return next;
}

constexpr double kInverseWeightEpsilon = 1e-12;

/// Per-block residuals ||softmax(W_b F_b) - L||_F^p.
inline Weights block_residuals(const FusionModel& model, const FeatureBatch& x1,
                               const FeatureBatch& x2, const LabelMatrix& labels, double p) {
  detail::require_training_inputs(model, x1, x2, labels, "block_residuals");
  const FusedActivation t = fused_activation(model, x1, x2);
  Weights r;
  for (int b = 0; b < 3; ++b) {
    const Matrix probs = softmax_columns(model.classifier[b] * t.block(b));
    r[b] = std::pow((probs - labels).norm(), p);
  }
  return r;
}

/// Re-derives c from the block residuals.
///
/// paper mode: c_i proportional to r_i. inverse mode: c_i proportional to
/// 1 / (r_i + 1e-12). All-zero residuals give uniform weights.
inline FusionModel update_adaptive_weights(const FusionModel& model, const FeatureBatch& x1,
                                           const FeatureBatch& x2, const LabelMatrix& labels,
                                           const Hyperparameters& hp) {
  if (hp.weight_mode == WeightMode::Fixed) {
    throw ValidationError("update_adaptive_weights: weight_mode is fixed");
  }
  const Weights r = block_residuals(model, x1, x2, labels, hp.p);
  FusionModel next = model;
  if (r.isZero(0.0)) {
    next.weights = Weights::Constant(1.0 / 3.0);
  } else if (hp.weight_mode == WeightMode::Paper) {
    next.weights = r / r.sum();
  } else {
    const Weights inv = (r.array() + kInverseWeightEpsilon).inverse().matrix();
    next.weights = inv / inv.sum();
  }
  return next;
}

enum class TrainStatus { Converged, MaxIterations, Diverged };

struct TrainOptions {
  InitScheme init = InitScheme::SplitIdentity;
  bool init_noise = true;
  // Columns drawn per outer iteration; 0 uses the full batch.
  Index batch_size = 0;
  // Starting c; with WeightMode::Fixed it stays there.
  std::optional<Weights> initial_weights;
};

struct TrainReport {
  std::size_t iterations_run = 0;
  std::vector<ObjectiveBreakdown> objective_trace;
  std::vector<Weights> weight_trace;
  bool converged = false;
  TrainStatus status = TrainStatus::MaxIterations;
  // 1-based iteration at which the objective became non-finite.
  std::size_t diverged_at = 0;
  FusionModel initial_model;
  FusionModel final_model;
};

namespace detail {

inline void require_simplex(const Weights& c) {
  if ((c.array() < 0.0).any() || std::abs(c.sum() - 1.0) > 1e-12) {
    throw ValidationError("adaptive weights must be non-negative and sum to 1");
  }
}

inline Matrix gather_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace detail

/// Runs the alternating loop V -> Q -> W -> c until the relative objective
/// change |J_t - J_{t-1}| / max(1, |J_{t-1}|) drops below `hp.tol`.
inline TrainReport train(const FeatureBatch& x1, const FeatureBatch& x2, const LabelMatrix& labels,
                         const Hyperparameters& hp, const TrainOptions& opts = {}) {
  hp.validate();
  validate_features(x1, "modality 1");
  validate_features(x2, "modality 2");
  if (x1.rows() != x2.rows()) {
    throw ShapeError("train: modalities have different feature dimensions (" +
                     std::to_string(x1.rows()) + " vs " + std::to_string(x2.rows()) + ")");
  }
  if (x1.cols() != x2.cols() || labels.cols() != x1.cols()) {
    throw ShapeError("train: sample counts differ (modality 1: " + std::to_string(x1.cols()) +
                     ", modality 2: " + std::to_string(x2.cols()) +
                     ", labels: " + std::to_string(labels.cols()) + ")");
  }
  validate_labels(labels);

  TrainReport report;
  FusionModel model = init_model(x1.rows(), labels.rows(), opts.init, hp.seed, opts.init_noise);
  if (opts.initial_weights) {
    detail::require_simplex(*opts.initial_weights);
    model.weights = *opts.initial_weights;
  }
  report.initial_model = model;

  const Index n = x1.cols();
  const bool minibatch = opts.batch_size > 0 && opts.batch_size < n;
  std::mt19937_64 rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  double previous = hp.max_iters > 0 ? total_objective(model, x1, x2, labels, hp).total : 0.0;
  for (std::uint64_t it = 1; it <= hp.max_iters; ++it) {
    if (minibatch) {
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<Index> cols(order.begin(), order.begin() + opts.batch_size);
      std::sort(cols.begin(), cols.end());
      const Matrix b1 = detail::gather_columns(x1, cols);
      const Matrix b2 = detail::gather_columns(x2, cols);
      const Matrix bl = detail::gather_columns(labels, cols);
      model = step_projections(model, b1, b2, bl, hp);
      model = step_classifier(model, b1, b2, bl, hp);
      if (hp.weight_mode != WeightMode::Fixed) model = update_adaptive_weights(model, b1, b2, bl, hp);
    } else {
      model = step_projections(model, x1, x2, labels, hp);
      model = step_classifier(model, x1, x2, labels, hp);
      if (hp.weight_mode != WeightMode::Fixed) model = update_adaptive_weights(model, x1, x2, labels, hp);
    }

    const ObjectiveBreakdown b = total_objective(model, x1, x2, labels, hp);
    report.iterations_run = static_cast<std::size_t>(it);
    report.objective_trace.push_back(b);
    report.weight_trace.push_back(model.weights);
    if (!std::isfinite(b.total)) {
      report.status = TrainStatus::Diverged;
      report.diverged_at = static_cast<std::size_t>(it);
      break;
    }
    if (std::abs(b.total - previous) / std::max(1.0, std::abs(previous)) < hp.tol) {
      report.status = TrainStatus::Converged;
      report.converged = true;
      break;
    }
    previous = b.total;
  }
  report.final_model = std::move(model);
  return report;
}

}  // namespace cimdl
