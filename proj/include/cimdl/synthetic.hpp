#pragma once

// Two-modality class-mean Gaussian benchmark with controllable overlap.
//
// Each sample is laid out as [shared (K) | specific (S) | zero padding]:
//  - shared: class mean common to both modalities, of norm
//    shared_separation * sqrt(K), plus a per-sample latent drawn once and copied into
//    both modalities. Each modality sees this block through its own fixed
//    random K x K rotation, so the coordinates do not line up across
//    modalities.
//  - specific: a per-modality class mean of norm
//    specific_separation * sqrt(S) plus a per-sample latent of sd
//    specific_sd drawn independently for each modality. A confusable pair (modality, a, b)
//    gives classes a and b the same specific mean in that modality.
// Class means point along random orthonormal directions (unit random
// directions when the block has fewer dimensions than classes), so every pair
// of classes is equally far apart. Isotropic noise is added to all M
// coordinates.

#include "cimdl/core.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cimdl {

struct Dataset {
  FeatureBatch modality1;
  FeatureBatch modality2;
  std::vector<int> labels;
  int num_classes = 0;

  Index samples() const { return modality1.cols(); }

  void validate() const {
    validate_features(modality1, "modality 1");
    validate_features(modality2, "modality 2");
    if (modality1.cols() != modality2.cols() || static_cast<Index>(labels.size()) != modality1.cols()) {
      throw ShapeError("dataset: sample counts differ");
    }
    for (int y : labels) {
      if (y < 0 || y >= num_classes) throw ValidationError("dataset: label out of range");
    }
  }
};

struct ConfusablePair {
  int modality = 1;  // 1 or 2
  int a = 0;
  int b = 0;
};

struct SyntheticSpec {
  int classes = 3;
  Index dim = 16;
  Index n_train = 300;
  Index n_test = 150;
  Index correlated_dim = 8;
  Index specific_dim = 8;
  double noise_sd = 1.0;
  // Standard deviation of the per-sample latent shared by both modalities.
  double shared_sd = 1.0;
  // Scale of the shared class means relative to the specific ones.
  double shared_separation = 1.0;
  double specific_separation = 1.0;
  // Standard deviation of the per-sample, per-modality specific latent.
  double specific_sd = 0.0;
  std::vector<ConfusablePair> ambiguity;
  std::uint64_t seed = 0;
};

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

/// The engineered two-modality task: M = 16, three classes, modality 1
/// confuses classes {0, 1} and modality 2 confuses {1, 2}. The shared block
/// carries weaker class information, common to both modalities, so that
/// neither modality alone nor the specific blocks alone see everything.
inline SyntheticSpec benchmark_spec(std::uint64_t seed);

/// Parses "1:A,B;2:C,D" into confusable pairs.
inline std::vector<ConfusablePair> parse_ambiguity(const std::string& text) {
  std::vector<ConfusablePair> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find(';', start);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    ConfusablePair p;
    char c1 = 0, c2 = 0;
    int consumed = 0;
    if (std::sscanf(item.c_str(), "%d%c%d%c%d%n", &p.modality, &c1, &p.a, &c2, &p.b, &consumed) != 5 ||
        c1 != ':' || c2 != ',' || consumed != static_cast<int>(item.size())) {
      throw ValidationError("ambiguity: cannot parse '" + item + "' (expected modality:A,B)");
    }
    out.push_back(p);
  }
  return out;
}

inline SyntheticSpec benchmark_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.dim = 16;
  spec.n_train = 300;
  spec.n_test = 150;
  spec.correlated_dim = 8;
  spec.specific_dim = 8;
  spec.noise_sd = 0.3;
  spec.shared_sd = 3.0;
  spec.shared_separation = 1.2;
  spec.specific_sd = 3.0;
  spec.specific_separation = 2.1;
  spec.ambiguity = parse_ambiguity("1:0,1;2:1,2");
  spec.seed = seed;
  return spec;
}

namespace detail {

/// Group representative per class after merging the given pairs.
inline std::vector<int> merge_classes(int classes, const std::vector<ConfusablePair>& pairs, int modality) {
  std::vector<int> parent(static_cast<std::size_t>(classes));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& p : pairs) {
    if (modality != 0 && p.modality != modality) continue;
    const int ra = find(p.a), rb = find(p.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> group(static_cast<std::size_t>(classes));
  for (int k = 0; k < classes; ++k) group[k] = find(k);
  return group;
}

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  if (sd == 0.0) return Matrix::Zero(rows, cols);
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix random_rotation(Index dim, std::mt19937_64& rng) {
  const Matrix g = gaussian(dim, dim, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// `classes` columns of norm `radius`, mutually orthogonal when rows >= classes.
inline Matrix class_means(Index rows, int classes, double radius, std::mt19937_64& rng) {
  if (rows == 0) return Matrix::Zero(0, classes);
  Matrix m = gaussian(rows, classes, rng);
  if (rows >= classes) {
    Eigen::HouseholderQR<Matrix> qr(m);
    m = qr.householderQ() * Matrix::Identity(rows, classes);
  } else {
    m.colwise().normalize();
  }
  return radius * m;
}

}  // namespace detail

inline SyntheticSplit generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ValidationError("synthetic: need >= 2 classes");
  if (spec.dim < 1 || spec.correlated_dim < 0 || spec.specific_dim < 0 ||
      spec.correlated_dim + spec.specific_dim > spec.dim) {
    throw ValidationError("synthetic: correlated_dim + specific_dim (" +
                          std::to_string(spec.correlated_dim + spec.specific_dim) +
                          ") exceeds dim " + std::to_string(spec.dim));
  }
  if (spec.n_train < spec.classes || spec.n_test < spec.classes) {
    throw ValidationError("synthetic: every split needs at least one sample per class");
  }
  if (!(spec.noise_sd >= 0.0) || !(spec.shared_sd >= 0.0) ||
      !(spec.shared_separation >= 0.0) ||
      !(spec.specific_separation >= 0.0) || !(spec.specific_sd >= 0.0)) {
    throw ValidationError("synthetic: noise, spread and separation parameters must be >= 0");
  }
  for (const auto& p : spec.ambiguity) {
    if ((p.modality != 1 && p.modality != 2) || p.a < 0 || p.b < 0 || p.a >= spec.classes ||
        p.b >= spec.classes) {
      throw ValidationError("synthetic: confusable pair " + std::to_string(p.modality) + ":" +
                            std::to_string(p.a) + "," + std::to_string(p.b) + " out of range");
    }
  }

  std::mt19937_64 rng(spec.seed);
  const Index k_dim = spec.correlated_dim;
  const Index s_dim = spec.specific_dim;
  const int l = spec.classes;

  const double shared_radius = spec.shared_separation * std::sqrt(static_cast<double>(k_dim));
  const double specific_radius = spec.specific_separation * std::sqrt(static_cast<double>(s_dim));
  const Matrix shared_means = detail::class_means(k_dim, l, shared_radius, rng);
  const std::array<Matrix, 2> specific_means = {detail::class_means(s_dim, l, specific_radius, rng),
                                                detail::class_means(s_dim, l, specific_radius, rng)};
  const std::array<Matrix, 2> rotations = {detail::random_rotation(k_dim, rng),
                                           detail::random_rotation(k_dim, rng)};
  const std::array<std::vector<int>, 2> specific_group = {detail::merge_classes(l, spec.ambiguity, 1),
                                                          detail::merge_classes(l, spec.ambiguity, 2)};

  auto make_split = [&](Index n) {
    Dataset d;
    d.num_classes = l;
    d.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = static_cast<int>(i % l);
    std::shuffle(d.labels.begin(), d.labels.end(), rng);

    std::array<Matrix, 2> clean = {Matrix::Zero(spec.dim, n), Matrix::Zero(spec.dim, n)};
    Matrix shared = detail::gaussian(k_dim, n, rng, spec.shared_sd);
    for (Index i = 0; i < n; ++i) shared.col(i) += shared_means.col(d.labels[static_cast<std::size_t>(i)]);
    for (int mod = 0; mod < 2; ++mod) {
      clean[mod].topRows(k_dim) = rotations[mod] * shared;
      clean[mod].middleRows(k_dim, s_dim) = detail::gaussian(s_dim, n, rng, spec.specific_sd);
      for (Index i = 0; i < n; ++i) {
        const int y = d.labels[static_cast<std::size_t>(i)];
        clean[mod].col(i).segment(k_dim, s_dim) += specific_means[mod].col(specific_group[mod][y]);
      }
    }
    d.modality1 = clean[0] + detail::gaussian(spec.dim, n, rng, spec.noise_sd);
    d.modality2 = clean[1] + detail::gaussian(spec.dim, n, rng, spec.noise_sd);
    return d;
  };

  SyntheticSplit out;
  out.train = make_split(spec.n_train);
  out.test = make_split(spec.n_test);
  return out;
}

}  // namespace cimdl
