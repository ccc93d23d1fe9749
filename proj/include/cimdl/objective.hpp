#pragma once

// Loss terms of the fusion layer's Lagrangian, the total objective and its
// analytic gradients. The gradients are derived from `total_objective` itself
// and are checked against `finite_difference_gradient` in the test suite.

#include "cimdl/core.hpp"
#include "cimdl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cimdl {

/// ||V1 X1 - V2 X2||_F^2
inline double correlation_loss(const Matrix& v1, const FeatureBatch& x1, const Matrix& v2,
                               const FeatureBatch& x2) {
  if (v1.cols() != x1.rows() || v2.cols() != x2.rows() || v1.rows() != v2.rows() ||
      x1.cols() != x2.cols()) {
    throw ShapeError("correlation_loss: shapes " + detail::shape_str(v1) + "*" + detail::shape_str(x1) +
                     " and " + detail::shape_str(v2) + "*" + detail::shape_str(x2) + " do not conform");
  }
  return (v1 * x1 - v2 * x2).squaredNorm();
}

/// X - V^T V X - Q^T Q X
inline Matrix reconstruction_error(const ProjectionPair& pair, const FeatureBatch& x) {
  const auto [c, a] = decompose(pair, x);
  return x - c - a;
}

inline double reconstruction_residual(const ProjectionPair& pair, const FeatureBatch& x) {
  return reconstruction_error(pair, x).squaredNorm();
}

/// ||V^T Q||_F^2
inline double orthogonality_penalty(const ProjectionPair& pair) {
  pair.validate_shape();
  return (pair.correlated.transpose() * pair.individual).squaredNorm();
}

/// log(cosh(x)), evaluated without overflow.
inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

inline double smooth_l1_grad(double x) { return std::tanh(x); }

inline double smooth_l1_sum(const Matrix& m) {
  return m.unaryExpr([](double v) { return smooth_l1(v); }).sum();
}

/// Sum of the Euclidean norms of the columns of W.
inline double l21_norm(const Matrix& w) { return w.colwise().norm().sum(); }

constexpr double kProbabilityFloor = 1e-300;

/// -sum_n sum_k L_kn log P_kn, summed over the batch.
inline double cross_entropy(const Matrix& probs, const LabelMatrix& labels) {
  detail::require_shape(labels, probs.rows(), probs.cols(), "cross_entropy labels");
  double total = 0.0;
  for (Index n = 0; n < probs.cols(); ++n) {
    for (Index k = 0; k < probs.rows(); ++k) {
      if (labels(k, n) != 0.0) {
        total -= labels(k, n) * std::log(std::max(probs(k, n), kProbabilityFloor));
      }
    }
  }
  return total;
}

struct ObjectiveBreakdown {
  double correlation = 0.0;
  double reconstruction1 = 0.0, reconstruction2 = 0.0;
  double orthogonality1 = 0.0, orthogonality2 = 0.0;
  double smooth_l1_corr1 = 0.0, smooth_l1_corr2 = 0.0;
  double smooth_l1_ind1 = 0.0, smooth_l1_ind2 = 0.0;
  double softmax_ce = 0.0;
  double l21 = 0.0;
  double total = 0.0;

  double reconstruction(int i) const { return i == 1 ? reconstruction1 : reconstruction2; }
  double orthogonality(int i) const { return i == 1 ? orthogonality1 : orthogonality2; }
};

/// Weighted sum of the parts; `total` is ignored.
inline double weighted_total(const ObjectiveBreakdown& b, const Hyperparameters& hp) {
  return b.correlation + hp.alpha1 * b.reconstruction1 + hp.alpha2 * b.reconstruction2 +
         hp.sigma1 * b.orthogonality1 + hp.sigma2 * b.orthogonality2 +
         hp.delta1 * b.smooth_l1_corr1 + hp.delta2 * b.smooth_l1_corr2 +
         hp.theta1 * b.smooth_l1_ind1 + hp.theta2 * b.smooth_l1_ind2 + hp.mu * b.softmax_ce +
         hp.eta * b.l21;
}

namespace detail {

inline void require_training_inputs(const FusionModel& model, const FeatureBatch& x1,
                                    const FeatureBatch& x2, const LabelMatrix& labels,
                                    const char* what) {
  require_pair_inputs(model, x1, x2, what);
  if (labels.rows() != model.classes() || labels.cols() != x1.cols()) {
    throw ShapeError(std::string(what) + ": labels are " + shape_str(labels) + ", expected " +
                     std::to_string(model.classes()) + "x" + std::to_string(x1.cols()));
  }
}

/// dJ/dZ for the weighted softmax loss: mu (P - L).
inline Matrix logit_residual(const FusionModel& model, const FeatureBatch& x1,
                             const FeatureBatch& x2, const LabelMatrix& labels, double mu) {
  const Matrix probs = softmax_columns(logits(model, fused_activation(model, x1, x2)));
  return mu * (probs - labels);
}

}  // namespace detail

inline ObjectiveBreakdown total_objective(const FusionModel& model, const FeatureBatch& x1,
                                          const FeatureBatch& x2, const LabelMatrix& labels,
                                          const Hyperparameters& hp) {
  detail::require_training_inputs(model, x1, x2, labels, "total_objective");
  const auto& [v1, q1] = model.modality1;
  const auto& [v2, q2] = model.modality2;

  ObjectiveBreakdown b;
  const Matrix v1x1 = v1 * x1;
  const Matrix v2x2 = v2 * x2;
  const Matrix q1x1 = q1 * x1;
  const Matrix q2x2 = q2 * x2;
  b.correlation = (v1x1 - v2x2).squaredNorm();
  b.reconstruction1 = (x1 - v1.transpose() * v1x1 - q1.transpose() * q1x1).squaredNorm();
  b.reconstruction2 = (x2 - v2.transpose() * v2x2 - q2.transpose() * q2x2).squaredNorm();
  b.orthogonality1 = (v1.transpose() * q1).squaredNorm();
  b.orthogonality2 = (v2.transpose() * q2).squaredNorm();
  b.smooth_l1_corr1 = smooth_l1_sum(v1x1);
  b.smooth_l1_corr2 = smooth_l1_sum(v2x2);
  b.smooth_l1_ind1 = smooth_l1_sum(q1x1);
  b.smooth_l1_ind2 = smooth_l1_sum(q2x2);
  b.softmax_ce = cross_entropy(softmax_columns(logits(model, fused_activation(model, x1, x2))), labels);
  b.l21 = l21_norm(model.stacked_classifier());
  b.total = weighted_total(b, hp);
  return b;
}

namespace detail {

/// grad_V given the logit residual mu (P - L) of the same model snapshot.
inline Matrix grad_V_from_residual(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                                   const Matrix& resid, const Hyperparameters& hp, int which) {
  const FeatureBatch& x = which == 1 ? x1 : x2;
  const auto& [v, q] = model.pair(which);
  const double sign = which == 1 ? 1.0 : -1.0;

  const Matrix diff = model.modality1.correlated * x1 - model.modality2.correlated * x2;
  const Matrix vx = v * x;
  const Matrix r = x - v.transpose() * vx - q.transpose() * (q * x);

  Matrix g = 2.0 * sign * diff * x.transpose();
  g.noalias() -= 2.0 * hp.alpha(which) * v * (x * r.transpose() + r * x.transpose());
  g.noalias() += 2.0 * hp.sigma(which) * q * (q.transpose() * v);
  g.noalias() += hp.delta(which) * vx.unaryExpr([](double t) { return smooth_l1_grad(t); }) * x.transpose();
  if (hp.mu != 0.0) {
    // F_c = (V1 X1 + V2 X2) / 2 enters the logits through c1 W1.
    g.noalias() += 0.5 * model.weights[0] * model.classifier[0].transpose() * resid * x.transpose();
  }
  return g;
}

inline Matrix grad_Q_from_residual(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                                   const Matrix& resid, const Hyperparameters& hp, int which) {
  const FeatureBatch& x = which == 1 ? x1 : x2;
  const auto& [v, q] = model.pair(which);

  const Matrix qx = q * x;
  const Matrix r = x - v.transpose() * (v * x) - q.transpose() * qx;

  Matrix g = -2.0 * hp.alpha(which) * q * (x * r.transpose() + r * x.transpose());
  g.noalias() += 2.0 * hp.sigma(which) * v * (v.transpose() * q);
  g.noalias() += hp.theta(which) * qx.unaryExpr([](double t) { return smooth_l1_grad(t); }) * x.transpose();
  if (hp.mu != 0.0) {
    g.noalias() += model.weights[which] * model.classifier[which].transpose() * resid * x.transpose();
  }
  return g;
}

inline Matrix residual_if_needed(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                                 const LabelMatrix& labels, double mu) {
  return mu != 0.0 ? logit_residual(model, x1, x2, labels, mu) : Matrix();
}

}  // namespace detail

/// dJ/dV_which.
inline Matrix grad_V(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                     const LabelMatrix& labels, const Hyperparameters& hp, int which) {
  detail::require_training_inputs(model, x1, x2, labels, "grad_V");
  return detail::grad_V_from_residual(model, x1, x2, detail::residual_if_needed(model, x1, x2, labels, hp.mu),
                                      hp, which);
}

/// dJ/dQ_which.
inline Matrix grad_Q(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                     const LabelMatrix& labels, const Hyperparameters& hp, int which) {
  detail::require_training_inputs(model, x1, x2, labels, "grad_Q");
  return detail::grad_Q_from_residual(model, x1, x2, detail::residual_if_needed(model, x1, x2, labels, hp.mu),
                                      hp, which);
}

/// Regularizer of the L2,1 kink: e_jj = 1 / (2 ||w_j|| + eps).
constexpr double kL21Epsilon = 1e-8;

/// dJ/dW for the stacked classifier [W1, W2, W3] (l x 3M).
inline Matrix grad_W(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                     const LabelMatrix& labels, const Hyperparameters& hp) {
  detail::require_training_inputs(model, x1, x2, labels, "grad_W");
  const Index m = model.dim();
  const Matrix w = model.stacked_classifier();
  Matrix g = Matrix::Zero(w.rows(), w.cols());
  if (hp.mu != 0.0) {
    const FusedActivation t = fused_activation(model, x1, x2);
    const Matrix probs = softmax_columns(logits(model, t));
    const Matrix resid = hp.mu * (probs - labels);
    for (int b = 0; b < 3; ++b) {
      g.middleCols(b * m, m).noalias() = model.weights[b] * resid * t.block(b).transpose();
    }
  }
  if (hp.eta != 0.0) {
    // 2 eta E W, with E diagonal over the columns of W.
    for (Index j = 0; j < w.cols(); ++j) {
      g.col(j) += 2.0 * hp.eta * w.col(j) / (2.0 * w.col(j).norm() + kL21Epsilon);
    }
  }
  return g;
}

/// Central differences of f around theta, one coordinate at a time.
template <typename Objective>
Matrix finite_difference_gradient(Objective&& f, const Matrix& theta, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_difference_gradient: step must be > 0");
  Matrix g(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (Index j = 0; j < theta.cols(); ++j) {
    for (Index i = 0; i < theta.rows(); ++i) {
      const double orig = theta(i, j);
      probe(i, j) = orig + h;
      const double up = f(static_cast<const Matrix&>(probe));
      probe(i, j) = orig - h;
      const double down = f(static_cast<const Matrix&>(probe));
      probe(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// max|a - b| / max(max|b|, 1e-12)
inline double relative_max_error(const Matrix& analytic, const Matrix& reference) {
  const double scale = std::max(reference.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - reference).cwiseAbs().maxCoeff() / scale;
}

}  // namespace cimdl
