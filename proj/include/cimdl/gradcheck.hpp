#pragma once

// Seeded random instances and an analytic-vs-central-difference comparison
// for the five parameter blocks V1, V2, Q1, Q2, W.

#include "cimdl/core.hpp"
#include "cimdl/io.hpp"
#include "cimdl/objective.hpp"
#include "cimdl/optimizer.hpp"

#include <array>
#include <random>
#include <string>

namespace cimdl {

struct GradientInstance {
  FusionModel model;
  FeatureBatch x1;
  FeatureBatch x2;
  LabelMatrix labels;
  Hyperparameters hp;
};

/// Random projections, classifier, simplex weights and features; every
/// multiplier drawn from [0.1, 1] so that no term of the objective vanishes.
inline GradientInstance random_gradient_instance(Index dim, Index samples, Index classes, std::uint64_t seed) {
  if (samples < 1) throw ValidationError("gradcheck: need at least one sample");
  GradientInstance inst;
  inst.model = init_model(dim, classes, InitScheme::SeededUniform, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  auto fill = [&](Index r, Index c, double scale) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = scale * normal(rng);
    return m;
  };
  for (auto& w : inst.model.classifier) w = fill(classes, dim, 0.5);
  Weights c(unit(rng), unit(rng), unit(rng));
  inst.model.weights = c / c.sum();
  inst.x1 = fill(dim, samples, 1.0);
  inst.x2 = fill(dim, samples, 1.0);
  std::vector<int> y(static_cast<std::size_t>(samples));
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  for (auto& v : y) v = cls(rng);
  inst.labels = one_hot(y, static_cast<int>(classes));

  Hyperparameters& hp = inst.hp;
  for (double* f : {&hp.alpha1, &hp.alpha2, &hp.sigma1, &hp.sigma2, &hp.delta1, &hp.delta2, &hp.theta1,
                    &hp.theta2, &hp.mu, &hp.eta}) {
    *f = unit(rng);
  }
  hp.lr_w = 1e-3;
  hp.lr_vq = 1e-5;
  hp.seed = seed;
  return inst;
}

inline constexpr std::array<const char*, 5> kGradientBlocks = {"V1", "V2", "Q1", "Q2", "W"};

/// Relative max-norm error per block, in the order of kGradientBlocks.
inline std::array<double, 5> gradient_errors(const GradientInstance& inst, double h = 1e-6) {
  const auto& [model, x1, x2, labels, hp] = inst;
  auto objective = [&](const FusionModel& m) { return total_objective(m, x1, x2, labels, hp).total; };

  std::array<double, 5> err{};
  for (int which = 1; which <= 2; ++which) {
    auto slot = [which](FusionModel& m, bool correlated) -> Matrix& {
      ProjectionPair& p = which == 1 ? m.modality1 : m.modality2;
      return correlated ? p.correlated : p.individual;
    };
    for (bool correlated : {true, false}) {
      FusionModel probe = model;
      const Matrix theta = slot(probe, correlated);
      const Matrix fd = finite_difference_gradient(
          [&](const Matrix& t) {
            slot(probe, correlated) = t;
            return objective(probe);
          },
          theta, h);
      const Matrix analytic = correlated ? grad_V(model, x1, x2, labels, hp, which)
                                         : grad_Q(model, x1, x2, labels, hp, which);
      err[(correlated ? 0 : 2) + (which - 1)] = relative_max_error(analytic, fd);
    }
  }
  FusionModel probe = model;
  const Matrix fd = finite_difference_gradient(
      [&](const Matrix& t) {
        probe.set_stacked_classifier(t);
        return objective(probe);
      },
      model.stacked_classifier(), h);
  err[4] = relative_max_error(grad_W(model, x1, x2, labels, hp), fd);
  return err;
}

}  // namespace cimdl
