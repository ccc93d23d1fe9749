#pragma once

// Domain types shared by every part of the CIMDL fusion layer.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cimdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Weights = Eigen::Vector3d;

// M x N, one sample per column.
using FeatureBatch = Matrix;
// l x N, one-hot columns.
using LabelMatrix = Matrix;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << shape_str(m);
    throw ShapeError(os.str());
  }
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(what) + ": expected square matrix, got " + shape_str(m));
  }
}

}  // namespace detail

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Throws unless X is a non-empty, finite feature matrix.
inline void validate_features(const FeatureBatch& x, const char* what = "features") {
  if (x.rows() < 1 || x.cols() < 1) {
    throw ShapeError(std::string(what) + ": empty feature batch");
  }
  if (!x.allFinite()) {
    throw ValidationError(std::string(what) + ": non-finite entry");
  }
}

/// Throws unless every column of L is one-hot.
inline void validate_labels(const LabelMatrix& labels) {
  for (Index n = 0; n < labels.cols(); ++n) {
    int ones = 0;
    for (Index k = 0; k < labels.rows(); ++k) {
      const double v = labels(k, n);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw ValidationError("label matrix: entry (" + std::to_string(k) + "," +
                              std::to_string(n) + ") is not 0 or 1");
      }
    }
    if (ones != 1) {
      throw ValidationError("label matrix: column " + std::to_string(n) + " is not one-hot");
    }
  }
}

/// Correlated map V and individual map Q of one modality.
struct ProjectionPair {
  Matrix correlated;  // V
  Matrix individual;  // Q

  Index dim() const { return correlated.rows(); }

  void validate_shape() const {
    detail::require_square(correlated, "correlated map");
    detail::require_square(individual, "individual map");
    if (correlated.rows() != individual.rows()) {
      throw ShapeError("projection pair: V is " + detail::shape_str(correlated) + " but Q is " +
                       detail::shape_str(individual));
    }
  }

  /// Shapes plus finiteness.
  void validate() const {
    validate_shape();
    if (!correlated.allFinite() || !individual.allFinite()) {
      throw ValidationError("projection pair: non-finite entry");
    }
  }

  bool operator==(const ProjectionPair&) const = default;
};

/// Full learned state of the fusion layer.
///
/// `classifier[0..2]` are W1 (correlated block), W2 (modality-1 individual
/// block) and W3 (modality-2 individual block), each l x M. `weights` is the
/// adaptive vector c and lives on the 3-simplex.
struct FusionModel {
  ProjectionPair modality1;
  ProjectionPair modality2;
  std::array<Matrix, 3> classifier;
  Weights weights = Weights::Constant(1.0 / 3.0);

  Index dim() const { return modality1.dim(); }
  Index classes() const { return classifier[0].rows(); }

  const ProjectionPair& pair(int modality) const {
    return modality == 1 ? modality1 : modality2;
  }
  ProjectionPair& pair(int modality) { return modality == 1 ? modality1 : modality2; }

  /// W = [W1, W2, W3], l x 3M.
  Matrix stacked_classifier() const {
    const Index m = dim();
    Matrix w(classes(), 3 * m);
    for (int b = 0; b < 3; ++b) w.middleCols(b * m, m) = classifier[b];
    return w;
  }

  void set_stacked_classifier(const Matrix& w) {
    const Index m = dim();
    detail::require_shape(w, classes(), 3 * m, "stacked classifier");
    for (int b = 0; b < 3; ++b) classifier[b] = w.middleCols(b * m, m);
  }

  void validate_shape() const {
    modality1.validate_shape();
    modality2.validate_shape();
    const Index m = dim();
    if (modality2.dim() != m) {
      throw ShapeError("fusion model: modality dimensions differ (" + std::to_string(m) + " vs " +
                       std::to_string(modality2.dim()) + ")");
    }
    const Index l = classes();
    for (const auto& w : classifier) detail::require_shape(w, l, m, "classifier block");
  }

  /// Shapes, finiteness and the simplex constraint on c.
  void validate() const {
    validate_shape();
    modality1.validate();
    modality2.validate();
    for (const auto& w : classifier) {
      if (!w.allFinite()) throw ValidationError("fusion model: non-finite classifier entry");
    }
    for (int i = 0; i < 3; ++i) {
      if (!(weights[i] >= 0.0)) throw ValidationError("fusion model: negative adaptive weight");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-12) {
      throw ValidationError("fusion model: adaptive weights do not sum to 1");
    }
  }

  bool operator==(const FusionModel&) const = default;
};

enum class WeightMode { Paper, Inverse, Fixed };

inline const char* to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::Paper: return "paper";
    case WeightMode::Inverse: return "inverse";
    case WeightMode::Fixed: return "fixed";
  }
  return "?";
}

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "paper") return WeightMode::Paper;
  if (s == "inverse") return WeightMode::Inverse;
  if (s == "fixed") return WeightMode::Fixed;
  throw ValidationError("unknown weight_mode '" + s + "' (expected paper, inverse or fixed)");
}

/// Multipliers, penalties, learning rates and loop controls.
struct Hyperparameters {
  double alpha1 = 0.0, alpha2 = 0.0;  // reconstruction
  double sigma1 = 0.0, sigma2 = 0.0;  // orthogonality
  double delta1 = 0.0, delta2 = 0.0;  // smooth-L1 on V_i X_i
  double theta1 = 0.0, theta2 = 0.0;  // smooth-L1 on Q_i X_i
  double mu = 0.0;                    // softmax loss
  double eta = 0.0;                   // L2,1
  double lr_w = 0.0;
  double lr_vq = 0.0;
  double p = 1.0;
  std::uint64_t max_iters = 500;
  double tol = 1e-6;
  WeightMode weight_mode = WeightMode::Paper;
  std::uint64_t seed = 0;

  double alpha(int i) const { return i == 1 ? alpha1 : alpha2; }
  double sigma(int i) const { return i == 1 ? sigma1 : sigma2; }
  double delta(int i) const { return i == 1 ? delta1 : delta2; }
  double theta(int i) const { return i == 1 ? theta1 : theta2; }

  void validate() const {
    const double nonneg[] = {alpha1, alpha2, sigma1, sigma2, delta1, delta2, theta1,
                             theta2, mu,     eta,    lr_w,   lr_vq,  p};
    for (double v : nonneg) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError("hyperparameters: multipliers, learning rates and p must be finite and >= 0");
      }
    }
    if (!(tol > 0.0)) throw ValidationError("hyperparameters: tol must be > 0");
  }

  bool operator==(const Hyperparameters&) const = default;
};

}  // namespace cimdl
