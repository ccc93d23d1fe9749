#pragma once

// Forward computations of the fusion layer: decomposition into correlated and
// individual parts, the stacked layer activation, weighted logits, column
// softmax and prediction.

#include "cimdl/core.hpp"

#include <vector>

namespace cimdl {

struct Decomposition {
  FeatureBatch correlated;  // C = V^T V X
  FeatureBatch individual;  // A = Q^T Q X
};

/// Splits X into its correlated part V^T V X and individual part Q^T Q X.
inline Decomposition decompose(const ProjectionPair& pair, const FeatureBatch& x) {
  pair.validate_shape();
  if (pair.dim() != x.rows()) {
    throw ShapeError("decompose: map is " + detail::shape_str(pair.correlated) + " but features are " +
                     detail::shape_str(x));
  }
  const Matrix& v = pair.correlated;
  const Matrix& q = pair.individual;
  return {v.transpose() * (v * x), q.transpose() * (q * x)};
}

/// Layer activation T (3M x N): [(V1 X1 + V2 X2) / 2; Q1 X1; Q2 X2].
class FusedActivation {
 public:
  FusedActivation() = default;
  FusedActivation(Matrix stacked, Index dim) : stacked_(std::move(stacked)), dim_(dim) {
    if (dim_ < 1 || stacked_.rows() != 3 * dim_) {
      throw ShapeError("fused activation: expected 3*" + std::to_string(dim_) + " rows, got " +
                       std::to_string(stacked_.rows()));
    }
  }

  Index dim() const { return dim_; }
  Index samples() const { return stacked_.cols(); }
  const Matrix& stacked() const { return stacked_; }

  /// Block 0 is the averaged correlated part, 1 and 2 the individual parts.
  auto block(int b) const { return stacked_.middleRows(b * dim_, dim_); }
  auto correlated() const { return block(0); }
  auto individual1() const { return block(1); }
  auto individual2() const { return block(2); }

 private:
  Matrix stacked_;
  Index dim_ = 0;
};

namespace detail {

inline void require_pair_inputs(const FusionModel& model, const FeatureBatch& x1,
                                const FeatureBatch& x2, const char* what) {
  model.validate_shape();
  const Index m = model.dim();
  if (x1.rows() != m || x2.rows() != m) {
    throw ShapeError(std::string(what) + ": model dimension " + std::to_string(m) +
                     " does not match features (" + shape_str(x1) + ", " + shape_str(x2) + ")");
  }
  if (x1.cols() != x2.cols()) {
    throw ShapeError(std::string(what) + ": modalities have different sample counts (" +
                     std::to_string(x1.cols()) + " vs " + std::to_string(x2.cols()) + ")");
  }
}

}  // namespace detail

inline FusedActivation fused_activation(const FusionModel& model, const FeatureBatch& x1,
                                        const FeatureBatch& x2) {
  detail::require_pair_inputs(model, x1, x2, "fused_activation");
  const Index m = model.dim();
  Matrix t(3 * m, x1.cols());
  t.middleRows(0, m) = 0.5 * (model.modality1.correlated * x1 + model.modality2.correlated * x2);
  t.middleRows(m, m) = model.modality1.individual * x1;
  t.middleRows(2 * m, m) = model.modality2.individual * x2;
  return {std::move(t), m};
}

/// Z = c1 W1 F_c + c2 W2 F_1 + c3 W3 F_2 (l x N).
inline Matrix logits(const FusionModel& model, const FusedActivation& t) {
  model.validate_shape();
  if (t.dim() != model.dim()) {
    throw ShapeError("logits: activation block size " + std::to_string(t.dim()) +
                     " does not match model dimension " + std::to_string(model.dim()));
  }
  Matrix z = Matrix::Zero(model.classes(), t.samples());
  for (int b = 0; b < 3; ++b) {
    z.noalias() += model.weights[b] * (model.classifier[b] * t.block(b));
  }
  return z;
}

/// Column-wise softmax with max shift.
inline Matrix softmax_columns(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Index n = 0; n < z.cols(); ++n) {
    const double shift = z.col(n).maxCoeff();
    p.col(n) = (z.col(n).array() - shift).exp().matrix();
    p.col(n) /= p.col(n).sum();
  }
  return p;
}

/// Per-column argmax, lowest index on ties.
inline std::vector<int> argmax_columns(const Matrix& z) {
  std::vector<int> out(static_cast<std::size_t>(z.cols()));
  for (Index n = 0; n < z.cols(); ++n) {
    Index best = 0;
    for (Index k = 1; k < z.rows(); ++k) {
      if (z(k, n) > z(best, n)) best = k;
    }
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict(const FusionModel& model, const FeatureBatch& x1,
                                const FeatureBatch& x2) {
  return argmax_columns(logits(model, fused_activation(model, x1, x2)));
}

}  // namespace cimdl
