#pragma once

// Accuracy/confusion metrics, the softmax-regression baselines, and the
// fixed-weight sweep over the correlated block's weight c1.

#include "cimdl/core.hpp"
#include "cimdl/io.hpp"
#include "cimdl/model.hpp"
#include "cimdl/objective.hpp"
#include "cimdl/optimizer.hpp"
#include "cimdl/synthetic.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

namespace cimdl {

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  // confusion[i][j]: ground truth i predicted as j.
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t n_samples = 0;
};

inline EvalReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                       int num_classes) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  check_labels(truth, num_classes);
  check_labels(predicted, num_classes);
  EvalReport r;
  const auto l = static_cast<std::size_t>(num_classes);
  r.confusion.assign(l, std::vector<std::size_t>(l, 0));
  for (std::size_t n = 0; n < truth.size(); ++n) ++r.confusion[truth[n]][predicted[n]];
  r.n_samples = truth.size();
  std::size_t correct = 0;
  r.per_class_accuracy.assign(l, 0.0);
  for (std::size_t k = 0; k < l; ++k) {
    correct += r.confusion[k][k];
    std::size_t row = 0;
    for (auto c : r.confusion[k]) row += c;
    r.per_class_accuracy[k] = row == 0 ? 0.0 : static_cast<double>(r.confusion[k][k]) / static_cast<double>(row);
  }
  r.accuracy = r.n_samples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.n_samples);
  return r;
}

inline EvalReport evaluate(const FusionModel& model, const FeatureBatch& x1, const FeatureBatch& x2,
                           const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != x1.cols()) {
    throw ShapeError("evaluate: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(x1.cols()) + " samples");
  }
  return evaluate_predictions(predict(model, x1, x2), labels, static_cast<int>(model.classes()));
}

// --------------------------------------------------------------- baselines

struct SoftmaxRegression {
  Matrix weights;  // l x M
  std::size_t iterations = 0;
  bool converged = false;

  std::vector<int> predict(const FeatureBatch& x) const {
    if (x.rows() != weights.cols()) {
      throw ShapeError("softmax regression: trained on " + std::to_string(weights.cols()) +
                       " features, got " + std::to_string(x.rows()));
    }
    return argmax_columns(weights * x);
  }
};

/// mu * CE(softmax(W X), L) + eta * ||W||_{2,1}
inline double softmax_regression_objective(const Matrix& w, const FeatureBatch& x, const LabelMatrix& labels,
                                           const Hyperparameters& hp) {
  return hp.mu * cross_entropy(softmax_columns(w * x), labels) + hp.eta * l21_norm(w);
}

/// Plain gradient descent with the classifier step size and stopping rule.
inline SoftmaxRegression train_softmax_regression(const FeatureBatch& x, const LabelMatrix& labels,
                                                  const Hyperparameters& hp) {
  validate_features(x);
  validate_labels(labels);
  if (labels.cols() != x.cols()) {
    throw ShapeError("softmax regression: " + std::to_string(labels.cols()) + " labels for " +
                     std::to_string(x.cols()) + " samples");
  }
  SoftmaxRegression model;
  model.weights = Matrix::Zero(labels.rows(), x.rows());
  double previous = softmax_regression_objective(model.weights, x, labels, hp);
  for (std::uint64_t it = 1; it <= hp.max_iters; ++it) {
    Matrix g = hp.mu * (softmax_columns(model.weights * x) - labels) * x.transpose();
    if (hp.eta != 0.0) {
      for (Index j = 0; j < g.cols(); ++j) {
        g.col(j) += 2.0 * hp.eta * model.weights.col(j) / (2.0 * model.weights.col(j).norm() + kL21Epsilon);
      }
    }
    model.weights -= hp.lr_w * g;
    model.iterations = static_cast<std::size_t>(it);
    const double current = softmax_regression_objective(model.weights, x, labels, hp);
    if (!std::isfinite(current)) break;
    if (std::abs(current - previous) / std::max(1.0, std::abs(previous)) < hp.tol) {
      model.converged = true;
      break;
    }
    previous = current;
  }
  return model;
}

inline EvalReport baseline_single_modality(const FeatureBatch& x_train, const std::vector<int>& y_train,
                                           const FeatureBatch& x_test, const std::vector<int>& y_test,
                                           int num_classes, const Hyperparameters& hp) {
  const SoftmaxRegression clf = train_softmax_regression(x_train, one_hot(y_train, num_classes), hp);
  if (static_cast<Index>(y_test.size()) != x_test.cols()) throw ShapeError("baseline: test labels do not match samples");
  return evaluate_predictions(clf.predict(x_test), y_test, num_classes);
}

inline FeatureBatch stack_modalities(const FeatureBatch& x1, const FeatureBatch& x2) {
  if (x1.cols() != x2.cols()) throw ShapeError("concat: modalities have different sample counts");
  FeatureBatch out(x1.rows() + x2.rows(), x1.cols());
  out << x1, x2;
  return out;
}

/// Softmax regression on the vertically stacked [X1; X2].
inline EvalReport baseline_concat(const Dataset& train, const Dataset& test, const Hyperparameters& hp) {
  return baseline_single_modality(stack_modalities(train.modality1, train.modality2), train.labels,
                                  stack_modalities(test.modality1, test.modality2), test.labels,
                                  train.num_classes, hp);
}

// ------------------------------------------------------------------- sweep

struct SweepPoint {
  double c1 = 0.0;
  double accuracy = 0.0;
  bool ok = true;
  std::string error;
};

/// "start:step:stop", inclusive of stop; values rounded to 1e-12.
inline std::vector<double> parse_grid(const std::string& text) {
  double start = 0, step = 0, stop = 0;
  char c1 = 0, c2 = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%lf%c%lf%c%lf%n", &start, &c1, &step, &c2, &stop, &consumed) != 5 ||
      c1 != ':' || c2 != ':' || consumed != static_cast<int>(text.size())) {
    throw ValidationError("grid: cannot parse '" + text + "' (expected start:step:stop)");
  }
  if (!(step > 0.0) || stop < start) throw ValidationError("grid: need step > 0 and stop >= start");
  std::vector<double> grid;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) grid.push_back(std::round((start + i * step) * 1e12) / 1e12);
  return grid;
}

/// c = (c1, (1 - c1) / 2, (1 - c1) / 2)
inline Weights sweep_weights(double c1) {
  const double rest = (1.0 - c1) / 2.0;
  return {c1, rest, rest};
}

/// Trains one fixed-weight model per grid value and records test accuracy.
inline std::vector<SweepPoint> weight_sweep(const Dataset& train_set, const Dataset& test_set, Hyperparameters hp,
                                            const std::vector<double>& grid, TrainOptions opts = {}) {
  for (double c1 : grid) {
    if (!(c1 >= 0.0 && c1 <= 1.0)) throw ValidationError("sweep: grid value " + std::to_string(c1) + " outside [0,1]");
  }
  hp.weight_mode = WeightMode::Fixed;
  const LabelMatrix labels = one_hot(train_set.labels, train_set.num_classes);
  std::vector<SweepPoint> out;
  for (double c1 : grid) {
    SweepPoint point;
    point.c1 = c1;
    try {
      opts.initial_weights = sweep_weights(c1);
      const TrainReport rep = train(train_set.modality1, train_set.modality2, labels, hp, opts);
      if (rep.status == TrainStatus::Diverged) {
        point.ok = false;
        point.error = "diverged at iteration " + std::to_string(rep.diverged_at);
      } else {
        point.accuracy = evaluate(rep.final_model, test_set.modality1, test_set.modality2, test_set.labels).accuracy;
      }
    } catch (const std::exception& e) {
      point.ok = false;
      point.error = e.what();
    }
    out.push_back(point);
  }
  return out;
}

// ----------------------------------------------------------------- reports

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["per_class_accuracy"] = r.per_class_accuracy;
  std::vector<std::size_t> flat;
  for (const auto& row : r.confusion) flat.insert(flat.end(), row.begin(), row.end());
  j["confusion"] = flat;
  j["n_samples"] = r.n_samples;
  return j;
}

inline nlohmann::ordered_json hyperparameters_to_json(const Hyperparameters& hp) {
  nlohmann::ordered_json j;
  Hyperparameters copy = hp;
  const auto fields = model_hyperparameter_fields(copy);
  for (std::size_t i = 0; i < fields.size(); ++i) j[kModelHyperparameterOrder[i]] = *fields[i];
  j["max_iters"] = hp.max_iters;
  j["weight_mode"] = to_string(hp.weight_mode);
  j["seed"] = hp.seed;
  return j;
}

/// "c1,accuracy" header, failed points written with an empty accuracy.
inline std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::string out = "c1,accuracy\n";
  for (const auto& p : points) {
    out += format_double(p.c1) + "," + (p.ok ? format_double(p.accuracy) : std::string()) + "\n";
  }
  return out;
}

}  // namespace cimdl
