#pragma once

#include "cimdl/core.hpp"

#include <algorithm>
#include <cmath>

namespace cimdl {

constexpr double kVarianceFloor = 1e-12;

/// Per-row affine map fitted on a training batch.
struct Standardizer {
  Vector mean;
  Vector scale;  // standard deviation, floored at sqrt(1e-12)

  static Standardizer fit(const FeatureBatch& train) {
    if (train.cols() < 2) throw ValidationError("standardize: need at least 2 samples");
    Standardizer s;
    const double n = static_cast<double>(train.cols());
    s.mean = train.rowwise().mean();
    s.scale.resize(train.rows());
    for (Index r = 0; r < train.rows(); ++r) {
      const double var = (train.row(r).array() - s.mean[r]).square().sum() / n;
      s.scale[r] = std::sqrt(std::max(var, kVarianceFloor));
    }
    return s;
  }

  FeatureBatch apply(const FeatureBatch& x) const {
    if (x.rows() != mean.size()) {
      throw ShapeError("standardize: fitted on " + std::to_string(mean.size()) + " rows, got " +
                       std::to_string(x.rows()));
    }
    return (x.colwise() - mean).array().colwise() / scale.array();
  }

  /// 2 x M: row 0 mean, row 1 scale.
  Matrix to_matrix() const {
    Matrix m(2, mean.size());
    m.row(0) = mean.transpose();
    m.row(1) = scale.transpose();
    return m;
  }

  static Standardizer from_matrix(const Matrix& m) {
    if (m.rows() != 2) throw FormatError("standardizer stats: expected 2 rows, got " + std::to_string(m.rows()));
    if ((m.row(1).array() <= 0.0).any()) throw FormatError("standardizer stats: non-positive scale");
    return {m.row(0).transpose(), m.row(1).transpose()};
  }
};

}  // namespace cimdl
