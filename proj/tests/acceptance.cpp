// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "cimdl/cimdl.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace cimdl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail << std::endl;
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every c recorded by any training run in this binary.
std::size_t weights_seen = 0;
std::size_t weights_off_simplex = 0;

void record_weights(const TrainReport& rep) {
  for (const Weights& c : rep.weight_trace) {
    ++weights_seen;
    if ((c.array() < 0.0).any() || !(std::abs(c.sum() - 1.0) < 1e-12)) ++weights_off_simplex;
  }
}

TrainReport run_train(const Dataset& d, const Hyperparameters& hp, const TrainOptions& opts = {}) {
  TrainReport rep = train(d.modality1, d.modality2, one_hot(d.labels, d.num_classes), hp, opts);
  record_weights(rep);
  return rep;
}

// ------------------------------------------------------------ criterion 1

void gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_at;
  int instance = 0;
  const Index dims[] = {3, 8}, samples[] = {5, 12}, classes[] = {2, 3};
  for (std::uint64_t seed = 0; seed < 20; ++seed, ++instance) {
    const Index m = dims[seed % 2], n = samples[(seed / 2) % 2], l = classes[(seed / 4) % 2];
    const auto errs = gradient_errors(random_gradient_instance(m, n, l, 1000 + seed), 1e-6);
    for (std::size_t b = 0; b < errs.size(); ++b) {
      if (errs[b] > worst) {
        worst = errs[b];
        worst_at = fmt("%s M=%ld N=%ld l=%ld seed=%lu", kGradientBlocks[b], long(m), long(n), long(l),
                       static_cast<unsigned long>(1000 + seed));
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst < 1e-5 && secs < 120.0,
         fmt("%d instances, worst relative error %.3e (%s), %.2f s", instance, worst, worst_at.c_str(), secs));
}

// ------------------------------------------------------------ criterion 2

void descent() {
  double worst_increase = -INFINITY;
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GradientInstance inst = random_gradient_instance(5, 12, 3, 2000 + seed);
    Hyperparameters hp = inst.hp;
    hp.lr_vq = hp.lr_w = 1e-6;
    hp.weight_mode = WeightMode::Fixed;
    hp.max_iters = 200;
    hp.tol = 1e-300;
    hp.seed = seed;
    const TrainReport rep = train(inst.x1, inst.x2, inst.labels, hp);
    record_weights(rep);
    double previous = total_objective(rep.initial_model, inst.x1, inst.x2, inst.labels, hp).total;
    for (const auto& b : rep.objective_trace) {
      worst_increase = std::max(worst_increase, b.total - previous);
      previous = b.total;
      ++steps;
    }
  }
  report(2, "descent at small step", steps == 1000 && worst_increase <= 1e-12,
         fmt("%zu steps over 5 instances, largest per-step change %+.3e", steps, worst_increase));
}

// ------------------------------------------------------------ criterion 3

void structural_trends() {
  const SyntheticSplit s = generate_synthetic(benchmark_spec(7));
  const Hyperparameters hp = resolve_hyperparameters(16, 300);
  const TrainReport rep = run_train(s.train, hp);
  const auto& first = rep.objective_trace.front();
  const auto& last = rep.objective_trace.back();
  double orth0[2], orth1[2];
  for (int i = 1; i <= 2; ++i) {
    orth0[i - 1] = std::sqrt(orthogonality_penalty(rep.initial_model.pair(i)));
    orth1[i - 1] = std::sqrt(orthogonality_penalty(rep.final_model.pair(i)));
  }
  const bool orth_ok = orth1[0] < orth0[0] && orth1[1] < orth0[1];
  const bool recon_ok = last.reconstruction1 <= first.reconstruction1 && last.reconstruction2 <= first.reconstruction2;
  report(3, "orthogonality decreases", orth_ok,
         fmt("||V1'Q1|| %.4g -> %.4g, ||V2'Q2|| %.4g -> %.4g after %zu iterations", orth0[0], orth1[0], orth0[1],
             orth1[1], rep.iterations_run));
  std::cout << (recon_ok ? "PASS" : "FAIL") << " criterion 3 (reconstruction residual non-increasing): "
            << fmt("recon1 %.6g (iter 1) -> %.6g, recon2 %.6g (iter 1) -> %.6g", first.reconstruction1,
                   last.reconstruction1, first.reconstruction2, last.reconstruction2)
            << std::endl;
  if (!recon_ok) ++failures;
}

// ------------------------------------------------------- criteria 4 and 6

// Means over seeds 7..16 from the reference run.
constexpr double kExpectedFused = 0.870667;
constexpr double kExpectedRgb = 0.785333;
constexpr double kExpectedDepth = 0.792000;
constexpr double kFrozenTolerance = 0.005;

void fusion_benefit() {
  double fused = 0, rgb = 0, depth = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 7; seed <= 16; ++seed) {
    const SyntheticSplit s = generate_synthetic(benchmark_spec(seed));
    const Hyperparameters hp = resolve_hyperparameters(16, 300);
    const TrainReport rep = run_train(s.train, hp);
    const double a = evaluate(rep.final_model, s.test.modality1, s.test.modality2, s.test.labels).accuracy;
    const double b1 = baseline_single_modality(s.train.modality1, s.train.labels, s.test.modality1, s.test.labels, 3, hp).accuracy;
    const double b2 = baseline_single_modality(s.train.modality2, s.train.labels, s.test.modality2, s.test.labels, 3, hp).accuracy;
    per_seed << fmt("  seed %2lu: fused %.4f  rgb %.4f  depth %.4f\n", static_cast<unsigned long>(seed), a, b1, b2);
    fused += a / 10.0;
    rgb += b1 / 10.0;
    depth += b2 / 10.0;
  }
  std::cout << per_seed.str();
  const bool margin = fused >= rgb + 0.05 && fused >= depth + 0.05;
  const bool frozen = std::abs(fused - kExpectedFused) <= kFrozenTolerance &&
                      std::abs(rgb - kExpectedRgb) <= kFrozenTolerance &&
                      std::abs(depth - kExpectedDepth) <= kFrozenTolerance;
  report(4, "fusion benefit", margin && frozen,
         fmt("mean accuracy fused %.4f, rgb %.4f, depth %.4f (margins %+.4f, %+.4f; reference %.4f/%.4f/%.4f)", fused,
             rgb, depth, fused - rgb, fused - depth, kExpectedFused, kExpectedRgb, kExpectedDepth));
}

void sweep_shape() {
  int peaked = 0;
  const std::vector<double> grid = parse_grid("0:0.1:1");
  for (std::uint64_t seed = 7; seed <= 16; ++seed) {
    const SyntheticSplit s = generate_synthetic(benchmark_spec(seed));
    Hyperparameters hp = resolve_hyperparameters(16, 300);
    hp.weight_mode = WeightMode::Fixed;
    const LabelMatrix labels = one_hot(s.train.labels, 3);
    std::vector<double> acc;
    for (double c1 : grid) {
      TrainOptions opts;
      opts.initial_weights = sweep_weights(c1);
      const TrainReport rep = run_train(s.train, hp, opts);
      acc.push_back(evaluate(rep.final_model, s.test.modality1, s.test.modality2, s.test.labels).accuracy);
    }
    const double interior = *std::max_element(acc.begin() + 1, acc.end() - 1);
    const bool ok = interior > acc.front() && interior > acc.back();
    peaked += ok;
    std::cout << fmt("  seed %2lu: c1=0 %.4f  interior max %.4f  c1=1 %.4f  %s\n", static_cast<unsigned long>(seed),
                     acc.front(), interior, acc.back(), ok ? "peak" : "no peak");
  }
  report(6, "weight-sweep interior peak", peaked >= 8, fmt("%d of 10 seeds peak in the interior", peaked));
}

// ------------------------------------------------------------ criterion 7

void normals() {
  const int w = 41, h = 41;
  auto make = [&](auto f) {
    std::vector<double> v;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) v.push_back(f(x, y));
    return depth_to_surface_normals(DepthMap::from_values(w, h, v));
  };
  bool constant_exact = true, slope_ok = true, unit_ok = true;
  double slope_err = 0, sphere_err = 0, unit_err = 0;
  const NormalMap flat = make([](int, int) { return 500.0; });
  const NormalMap slope = make([](int x, int) { return 100.0 + x; });
  const double r = 60.0, c = 20.0;
  auto sphere_z = [&](int x, int y) { return std::sqrt(r * r - (x - c) * (x - c) - (y - c) * (y - c)); };
  const NormalMap sphere = make(sphere_z);
  const Eigen::Vector3d slope_normal = Eigen::Vector3d(-1, 0, 1) / std::sqrt(2.0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      constant_exact = constant_exact && flat.at(x, y) == Eigen::Vector3d(0, 0, 1);
      slope_err = std::max(slope_err, (slope.at(x, y) - slope_normal).cwiseAbs().maxCoeff());
      const Eigen::Vector3d analytic = Eigen::Vector3d(x - c, y - c, sphere_z(x, y)).normalized();
      sphere_err = std::max(sphere_err, std::acos(std::clamp(sphere.at(x, y).dot(analytic), -1.0, 1.0)));
      for (const NormalMap* n : {&flat, &slope, &sphere}) {
        if (n->is_valid(x, y)) unit_err = std::max(unit_err, std::abs(n->at(x, y).norm() - 1.0));
      }
    }
  }
  slope_ok = slope_err <= 1e-12;
  unit_ok = unit_err <= 1e-9;
  report(7, "surface normals", constant_exact && slope_ok && sphere_err < 0.05 && unit_ok,
         fmt("constant plane exact: %s, slope error %.2e, sphere max angle %.4f rad, unit-norm error %.2e",
             constant_exact ? "yes" : "no", slope_err, sphere_err, unit_err));
}

// ------------------------------------------------------------ criterion 8

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return detail::read_file(p); }

std::string trace_text(const TrainReport& rep) {
  std::string out;
  for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
    const auto& b = rep.objective_trace[i];
    out += format_double(b.total) + "," + format_double(b.correlation) + "," + format_double(b.softmax_ce);
    for (int k = 0; k < 3; ++k) out += "," + format_double(rep.weight_trace[i][k]);
    out += "\n";
  }
  return out;
}

void determinism_and_serialization() {
  const fs::path dir = fs::temp_directory_path() / "cimdl_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  std::vector<std::string> notes;

  // Two identical training runs.
  SyntheticSpec spec = benchmark_spec(7);
  spec.n_train = 120;
  std::string traces[2], reports[2];
  for (int run = 0; run < 2; ++run) {
    const SyntheticSplit s = generate_synthetic(spec);
    Hyperparameters hp = resolve_hyperparameters(16, 120);
    hp.max_iters = 100;
    const TrainReport rep = run_train(s.train, hp);
    save_model(dir / ("m" + std::to_string(run) + ".cimm"), rep.final_model, hp);
    traces[run] = trace_text(rep);
    nlohmann::ordered_json j = report_to_json(evaluate(rep.final_model, s.test.modality1, s.test.modality2, s.test.labels));
    j["hyperparameters"] = hyperparameters_to_json(hp);
    reports[run] = j.dump(2);
  }
  if (file_bytes(dir / "m0.cimm") != file_bytes(dir / "m1.cimm")) ok = false, notes.push_back("model files differ");
  if (traces[0] != traces[1]) ok = false, notes.push_back("traces differ");
  if (reports[0] != reports[1]) ok = false, notes.push_back("reports differ");

  // Round trips of every format.
  const Matrix x = Matrix::Random(7, 5);
  write_features(dir / "x.cimf", x);
  const Matrix xb = read_features(dir / "x.cimf");
  if (std::memcmp(x.data(), xb.data(), sizeof(double) * 35) != 0) ok = false, notes.push_back("CIMF differs");
  const std::vector<int> labels = {2, 0, 1, 1, 0};
  write_labels(dir / "y.ciml", labels, 3);
  if (read_labels(dir / "y.ciml").labels != labels) ok = false, notes.push_back("CIML differs");
  const ModelFile mf = load_model(dir / "m0.cimm");
  save_model(dir / "m2.cimm", mf.model, mf.hyperparameters);
  if (file_bytes(dir / "m2.cimm") != file_bytes(dir / "m0.cimm")) ok = false, notes.push_back("CIMM re-encode differs");

  // One million entries.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Matrix big(1000, 1000);
  for (Index j = 0; j < big.cols(); ++j)
    for (Index i = 0; i < big.rows(); ++i) big(i, j) = nd(rng);
  const auto t0 = Clock::now();
  write_features(dir / "big.cimf", big);
  const Matrix back = read_features(dir / "big.cimf");
  const double secs = seconds_since(t0);
  const bool big_ok = back.rows() == 1000 && back.cols() == 1000 &&
                      std::memcmp(big.data(), back.data(), sizeof(double) * 1000000) == 0;
  if (!big_ok) ok = false, notes.push_back("10^6 matrix differs");
  if (!(secs < 5.0)) ok = false, notes.push_back("10^6 round trip too slow");
  fs::remove_all(dir);

  std::string detail = fmt("identical runs byte-equal, formats round-trip, 10^6-entry round trip %.3f s", secs);
  if (!ok) {
    detail = "";
    for (const auto& n : notes) detail += n + "; ";
  }
  report(8, "determinism and serialization", ok, detail);
}

// ------------------------------------------------------------ criterion 9

void defaults() {
  const Hyperparameters hp = resolve_hyperparameters(50, 100);
  const bool ok = hp.alpha1 == 0.005 && hp.alpha2 == 0.005 && hp.sigma1 == 0.01 && hp.sigma2 == 0.01 &&
                  hp.mu == 0.1 && hp.delta1 == 5e-5 && hp.delta2 == 5e-5 && hp.theta1 == 5e-5 &&
                  hp.theta2 == 5e-5 && hp.eta == 1.0 && hp.lr_w == 1e-3 && hp.lr_vq == 1e-5;
  report(9, "size-derived defaults", ok,
         fmt("M=50 N=100: alpha %.17g sigma %.17g mu %.17g delta %.17g theta %.17g eta %g lr_w %g lr_vq %g", hp.alpha1,
             hp.sigma1, hp.mu, hp.delta1, hp.theta1, hp.eta, hp.lr_w, hp.lr_vq));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  try {
    gradients();
    descent();
    structural_trends();
    fusion_benefit();
    sweep_shape();
    report(5, "simplex invariant", weights_seen > 0 && weights_off_simplex == 0,
           fmt("%zu recorded weight vectors, %zu off the simplex", weights_seen, weights_off_simplex));
    normals();
    determinism_and_serialization();
    defaults();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << fmt("%d failing criteria, %.1f s total", failures, seconds_since(t0)) << std::endl;
  return failures == 0 ? 0 : 1;
}
