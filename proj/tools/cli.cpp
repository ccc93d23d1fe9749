#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

namespace cimdl::cli {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "init") {
    cfg.init = parse_init_scheme(value);
  } else if (key == "standardize") {
    if (value == "true" || value == "1" || value == "yes") {
      cfg.standardize = true;
    } else if (value == "false" || value == "0" || value == "no") {
      cfg.standardize = false;
    } else {
      throw ValidationError("standardize: expected true or false, got '" + value + "'");
    }
  } else if (key == "batch_size") {
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(value, &used);
    } catch (const std::exception&) {
    }
    if (used != value.size() || v < 0) {
      throw ValidationError("batch_size: expected a non-negative integer, got '" + value + "'");
    }
    cfg.batch_size = static_cast<Index>(v);
  } else {
    // Let the resolver reject unknown keys and bad values now rather than after loading data.
    resolve_hyperparameters(1, 1, {{key, value}});
    cfg.overrides[key] = value;
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_setting(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ValidationError(where + ": expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  std::string value = trim(text.substr(eq + 1));
  if (key.empty()) throw ValidationError(where + ": empty key");
  return {key, value};
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto [key, value] = split_setting(line, where);
    try {
      apply_setting(cfg, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open config");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

std::string sha256_file(const fs::path& path) {
  const detail::Bytes bytes = detail::read_file(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 failed for " + path.string());
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

fs::path stats_path(const fs::path& model) { return fs::path(model.string() + ".stats.cimf"); }

// ---------------------------------------------------------------- helpers

namespace {

struct Inputs {
  FeatureBatch rgb;
  FeatureBatch depth;
  std::vector<int> labels;
  int num_classes = 0;
};

Inputs load_inputs(const std::string& rgb, const std::string& depth, const std::string& labels,
                   int expected_classes = 0) {
  Inputs in;
  in.rgb = read_matrix_any(rgb);
  in.depth = read_matrix_any(depth);
  LabelFile lf = read_labels(labels, expected_classes);
  in.labels = std::move(lf.labels);
  in.num_classes = lf.num_classes;
  if (in.rgb.rows() != in.depth.rows()) {
    throw ShapeError("--rgb " + rgb + " has " + std::to_string(in.rgb.rows()) + " features but --depth " + depth +
                     " has " + std::to_string(in.depth.rows()));
  }
  if (in.rgb.cols() != in.depth.cols() || static_cast<Index>(in.labels.size()) != in.rgb.cols()) {
    throw ShapeError("sample counts differ: --rgb " + std::to_string(in.rgb.cols()) + ", --depth " +
                     std::to_string(in.depth.cols()) + ", --labels " + std::to_string(in.labels.size()));
  }
  return in;
}

struct Standardization {
  Standardizer rgb;
  Standardizer depth;

  static Standardization fit(const Inputs& in) { return {Standardizer::fit(in.rgb), Standardizer::fit(in.depth)}; }

  void apply(Inputs& in) const {
    in.rgb = rgb.apply(in.rgb);
    in.depth = depth.apply(in.depth);
  }

  Matrix to_matrix() const {
    Matrix m(4, rgb.mean.size());
    m << rgb.to_matrix(), depth.to_matrix();
    return m;
  }

  static Standardization from_matrix(const Matrix& m) {
    if (m.rows() != 4) throw FormatError("standardizer stats: expected 4 rows, got " + std::to_string(m.rows()));
    return {Standardizer::from_matrix(m.topRows(2)), Standardizer::from_matrix(m.bottomRows(2))};
  }
};

TrainOptions options_from(const RunConfig& cfg) {
  TrainOptions opts;
  opts.init = cfg.init;
  opts.batch_size = cfg.batch_size;
  return opts;
}

RunConfig gather_config(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  for (const auto& s : sets) {
    const auto [key, value] = split_setting(s, "--set");
    try {
      apply_setting(cfg, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("--set ") + s + ": " + e.what());
    }
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path.string() + ": write failed");
}

std::string trace_csv(const TrainReport& rep) {
  std::string out = "iter,total,correlation,recon1,recon2,orth1,orth2,ce,l21,c1,c2,c3\n";
  for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
    const auto& b = rep.objective_trace[i];
    const auto& c = rep.weight_trace[i];
    const double row[] = {b.total,           b.correlation,    b.reconstruction1, b.reconstruction2,
                          b.orthogonality1,  b.orthogonality2, b.softmax_ce,      b.l21,
                          c[0],              c[1],             c[2]};
    out += std::to_string(i + 1);
    for (double v : row) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

const char* status_name(TrainStatus s) {
  switch (s) {
    case TrainStatus::Converged: return "converged";
    case TrainStatus::MaxIterations: return "max-iterations";
    case TrainStatus::Diverged: return "diverged";
  }
  return "?";
}

nlohmann::ordered_json file_entry(const std::string& path) {
  nlohmann::ordered_json j;
  j["path"] = path;
  j["sha256"] = sha256_file(path);
  return j;
}

// ------------------------------------------------------------- subcommands

struct GenArgs {
  std::string out;
  SyntheticSpec spec;
  std::string ambiguity;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  SyntheticSpec spec = a.spec;
  spec.ambiguity = parse_ambiguity(a.ambiguity);
  const SyntheticSplit split = generate_synthetic(spec);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  for (const auto& [name, d] : {std::pair<const char*, const Dataset*>{"train", &split.train}, {"test", &split.test}}) {
    write_features(dir / (std::string(name) + "_rgb.cimf"), d->modality1);
    write_features(dir / (std::string(name) + "_depth.cimf"), d->modality2);
    write_labels(dir / (std::string(name) + "_labels.ciml"), d->labels, d->num_classes);
  }
  out << "wrote " << split.train.samples() << " train and " << split.test.samples() << " test samples to "
      << dir.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string rgb, depth, labels, config, out = "model.cimm", trace;
  std::vector<std::string> sets;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = gather_config(a.config, a.sets);
  Inputs in = load_inputs(a.rgb, a.depth, a.labels);
  std::optional<Standardization> stz;
  if (cfg.standardize) {
    stz = Standardization::fit(in);
    stz->apply(in);
  }
  const Hyperparameters hp = resolve_hyperparameters(in.rgb.rows(), in.rgb.cols(), cfg.overrides);
  const TrainReport rep = train(in.rgb, in.depth, one_hot(in.labels, in.num_classes), hp, options_from(cfg));
  if (a.verbose) {
    for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
      err << "iter " << i + 1 << " objective " << format_double(rep.objective_trace[i].total) << "\n";
    }
  }
  if (!a.trace.empty()) write_text(a.trace, trace_csv(rep));
  if (rep.status == TrainStatus::Diverged) {
    err << "error: training diverged at iteration " << rep.diverged_at << " (non-finite objective)\n";
    return kExitDiverged;
  }
  save_model(a.out, rep.final_model, hp);
  if (stz) write_features(stats_path(a.out), stz->to_matrix());

  const double acc = evaluate(rep.final_model, in.rgb, in.depth, in.labels).accuracy;
  const double objective = rep.objective_trace.empty() ? std::nan("") : rep.objective_trace.back().total;
  const Weights& c = rep.final_model.weights;
  out << "status " << status_name(rep.status) << "\n"
      << "iterations " << rep.iterations_run << "\n"
      << "objective " << format_double(objective) << "\n"
      << "weights " << format_double(c[0]) << " " << format_double(c[1]) << " " << format_double(c[2]) << "\n"
      << "train_accuracy " << format_double(acc) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, rgb, depth, labels, report;
  bool stamp = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ModelFile mf = load_model(a.model);
  const FusionModel& model = mf.model;
  Inputs in = load_inputs(a.rgb, a.depth, a.labels, static_cast<int>(model.classes()));
  if (in.rgb.rows() != model.dim()) {
    throw ShapeError("model " + a.model + " expects " + std::to_string(model.dim()) + " features per modality but " +
                     a.rgb + " has " + std::to_string(in.rgb.rows()));
  }
  const fs::path stats = stats_path(a.model);
  const bool standardized = fs::exists(stats);
  if (standardized) Standardization::from_matrix(read_features(stats)).apply(in);
  const EvalReport rep = evaluate(model, in.rgb, in.depth, in.labels);

  nlohmann::ordered_json j;
  j["model"] = file_entry(a.model);
  j["inputs"]["rgb"] = file_entry(a.rgb);
  j["inputs"]["depth"] = file_entry(a.depth);
  j["inputs"]["labels"] = file_entry(a.labels);
  j["standardized"] = standardized;
  // The model file stores only the 14 numeric hyperparameters; the training seed is not recoverable.
  j["seed"] = nullptr;
  j["hyperparameters"] = hyperparameters_to_json(mf.hyperparameters);
  for (const char* unstored : {"max_iters", "weight_mode", "seed"}) j["hyperparameters"].erase(unstored);
  j["weights"] = {model.weights[0], model.weights[1], model.weights[2]};
  const nlohmann::ordered_json fields = report_to_json(rep);
  for (const auto& [k, v] : fields.items()) j[k] = v;
  if (a.stamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    j["generated_at"] = buf;
  }
  write_text(a.report, j.dump(2) + "\n");
  out << "accuracy " << format_double(rep.accuracy) << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  Index dim = 6, samples = 8, classes = 3;
  std::uint64_t seed = 1;
  double tol = 1e-5;
  double step = 1e-6;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const GradientInstance inst = random_gradient_instance(a.dim, a.samples, a.classes, a.seed);
  const auto errors = gradient_errors(inst, a.step);
  bool ok = true;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const bool pass = errors[i] < a.tol;
    ok = ok && pass;
    out << kGradientBlocks[i] << " " << format_double(errors[i]) << (pass ? " ok" : " FAIL") << "\n";
  }
  return ok ? kExitOk : kExitGradcheck;
}

struct SweepArgs {
  std::string rgb, depth, labels, test_rgb, test_depth, test_labels, grid = "0:0.1:1", out, config;
  std::vector<std::string> sets;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = gather_config(a.config, a.sets);
  const std::vector<double> grid = parse_grid(a.grid);
  Inputs tr = load_inputs(a.rgb, a.depth, a.labels);
  Inputs te = load_inputs(a.test_rgb, a.test_depth, a.test_labels, tr.num_classes);
  if (te.rgb.rows() != tr.rgb.rows()) {
    throw ShapeError("--test-rgb " + a.test_rgb + " has " + std::to_string(te.rgb.rows()) +
                     " features, training files have " + std::to_string(tr.rgb.rows()));
  }
  if (cfg.standardize) {
    const Standardization stz = Standardization::fit(tr);
    stz.apply(tr);
    stz.apply(te);
  }
  const Hyperparameters hp = resolve_hyperparameters(tr.rgb.rows(), tr.rgb.cols(), cfg.overrides);
  const Dataset train_set{tr.rgb, tr.depth, tr.labels, tr.num_classes};
  const Dataset test_set{te.rgb, te.depth, te.labels, tr.num_classes};
  const auto points = weight_sweep(train_set, test_set, hp, grid, options_from(cfg));
  write_text(a.out, sweep_to_csv(points));
  int code = kExitOk;
  for (const auto& p : points) {
    if (p.ok) {
      out << "c1 " << format_double(p.c1) << " accuracy " << format_double(p.accuracy) << "\n";
    } else {
      err << "error: c1 " << format_double(p.c1) << ": " << p.error << "\n";
      code = kExitDiverged;
    }
  }
  return code;
}

struct NormalsArgs {
  std::string in, out, raw;
};

int cmd_encode_normals(const NormalsArgs& a, std::ostream& out) {
  const NormalMap normals = depth_to_surface_normals(read_pgm(a.in));
  write_ppm(a.out, normals);
  if (!a.raw.empty()) write_features(a.raw, normals.normals);
  std::size_t valid = 0;
  for (auto v : normals.valid) valid += v;
  out << "encoded " << normals.width << "x" << normals.height << " (" << valid << " valid pixels)\n";
  return kExitOk;
}

}  // namespace

// -------------------------------------------------------------------- run

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Correlated/individual two-modality fusion layer"};
  app.name("cimdl");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a synthetic two-modality train/test set");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--classes", gen.spec.classes, "Number of classes")->capture_default_str();
  g->add_option("--dim", gen.spec.dim, "Features per modality")->capture_default_str();
  g->add_option("--train", gen.spec.n_train, "Training samples")->capture_default_str();
  g->add_option("--test", gen.spec.n_test, "Test samples")->capture_default_str();
  g->add_option("--correlated-dim", gen.spec.correlated_dim, "Shared block size")->capture_default_str();
  g->add_option("--specific-dim", gen.spec.specific_dim, "Modality-specific block size")->capture_default_str();
  g->add_option("--noise", gen.spec.noise_sd, "Isotropic noise sd")->capture_default_str();
  g->add_option("--shared-sd", gen.spec.shared_sd, "Per-sample shared latent sd")->capture_default_str();
  g->add_option("--specific-sd", gen.spec.specific_sd, "Per-sample specific latent sd")->capture_default_str();
  g->add_option("--shared-separation", gen.spec.shared_separation, "Shared class-mean scale")
      ->capture_default_str();
  g->add_option("--specific-separation", gen.spec.specific_separation, "Specific class-mean scale")
      ->capture_default_str();
  g->add_option("--ambiguity", gen.ambiguity, "Confusable pairs, e.g. \"1:0,1;2:1,2\"");
  g->add_option("--seed", gen.spec.seed, "RNG seed")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit a fusion model");
  t->add_option("--rgb", tr.rgb, "Modality-1 features (CIMF or CSV, M x N)")->required();
  t->add_option("--depth", tr.depth, "Modality-2 features (CIMF or CSV, M x N)")->required();
  t->add_option("--labels", tr.labels, "Labels (CIML)")->required();
  t->add_option("--config", tr.config, "key=value configuration file");
  t->add_option("--set", tr.sets, "key=value override, repeatable; wins over --config");
  t->add_option("--out", tr.out, "Model file")->capture_default_str();
  t->add_option("--trace", tr.trace, "Objective trace CSV");
  t->add_flag("--verbose", tr.verbose, "Log the objective after every iteration to stderr");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a model on labelled features");
  e->add_option("--model", ev.model, "Model file (CIMM)")->required();
  e->add_option("--rgb", ev.rgb, "Modality-1 features")->required();
  e->add_option("--depth", ev.depth, "Modality-2 features")->required();
  e->add_option("--labels", ev.labels, "Labels (CIML)")->required();
  e->add_option("--report", ev.report, "JSON report path")->required();
  e->add_flag("--stamp", ev.stamp, "Include a UTC timestamp in the report");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  c->add_option("--dim", gc.dim, "Features per modality")->capture_default_str();
  c->add_option("--samples", gc.samples, "Samples")->capture_default_str();
  c->add_option("--classes", gc.classes, "Classes")->capture_default_str();
  c->add_option("--seed", gc.seed, "Instance seed")->capture_default_str();
  c->add_option("--tol", gc.tol, "Maximum relative error")->capture_default_str();
  c->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Accuracy as a function of the fixed correlated weight c1");
  s->add_option("--rgb", sw.rgb, "Training modality-1 features")->required();
  s->add_option("--depth", sw.depth, "Training modality-2 features")->required();
  s->add_option("--labels", sw.labels, "Training labels")->required();
  s->add_option("--test-rgb", sw.test_rgb, "Test modality-1 features")->required();
  s->add_option("--test-depth", sw.test_depth, "Test modality-2 features")->required();
  s->add_option("--test-labels", sw.test_labels, "Test labels")->required();
  s->add_option("--grid", sw.grid, "start:step:stop over c1")->capture_default_str();
  s->add_option("--out", sw.out, "CSV output")->required();
  s->add_option("--config", sw.config, "key=value configuration file");
  s->add_option("--set", sw.sets, "key=value override, repeatable");

  NormalsArgs nm;
  auto* n = app.add_subcommand("encode-normals", "Depth PGM to surface-normal PPM");
  n->add_option("--in", nm.in, "Depth image (binary PGM)")->required();
  n->add_option("--out", nm.out, "Normal image (binary PPM)")->required();
  n->add_option("--raw", nm.raw, "Unit normals as a 3 x (W*H) CIMF matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitInvalid;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_gradcheck(gc, out);
    if (s->parsed()) return cmd_sweep(sw, out, err);
    if (n->parsed()) return cmd_encode_normals(nm, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cimdl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cimdl::cli
