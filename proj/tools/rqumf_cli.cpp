// rqumf: generate / fit / bench / tune / eval / solve.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rqumf/eval.hpp"
#include "rqumf/experiment.hpp"
#include "rqumf/geometry.hpp"
#include "rqumf/pipeline.hpp"
#include "rqumf/preference.hpp"
#include "rqumf/qubo.hpp"
#include "rqumf/solvers.hpp"
#include "rqumf/tuning.hpp"

namespace {

using nlohmann::json;
using namespace rqumf;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every flag that can also come from the --config file.
struct Flags {
  std::optional<std::string> config_path;
  std::optional<std::string> scenario;
  std::vector<std::string> methods;
  std::optional<std::string> solver;
  std::optional<std::string> points;
  std::optional<std::string> preference;
  std::optional<double> epsilon;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::size_t> models_per_point;
  std::optional<std::size_t> n_models;
  std::optional<std::size_t> subproblem_size;
  std::optional<std::size_t> sa_samples;
  std::optional<std::size_t> sa_sweeps;
  std::optional<std::size_t> repeats;
  std::optional<std::uint64_t> seed;
  std::vector<double> grid;
  std::optional<double> outlier_fraction;
  std::optional<std::size_t> total_points;
  std::optional<double> noise_sigma;
  std::optional<double> baseline_lambda;
  std::optional<std::size_t> k;
  std::optional<std::string> external_command;
  bool no_gt_injection = false;
  bool no_dedup = false;
  std::string out;
  bool no_timestamp = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_path, "JSON config file (flags take precedence)")->check(CLI::ExistingFile);
  app->add_option("--scenario", f.scenario,
                  "PentagonSweepOutliers | PentagonSweepModels | PlaneFit3D | IngestedPreference");
  app->add_option("--solver", f.solver, "SA | Exhaustive | ExternalAdapter");
  app->add_option("--seed", f.seed, "base seed");
  app->add_option("--out", f.out, "output path")->required();
  app->add_flag("--no-timestamp", f.no_timestamp, "omit wall-clock fields so outputs are byte-identical");
}

void add_synthetic(CLI::App* app, Flags& f) {
  app->add_option("--outlier-fraction", f.outlier_fraction, "fraction of outliers in [0, 0.5]");
  app->add_option("--total-points", f.total_points, "points per synthetic instance");
  app->add_option("--noise-sigma", f.noise_sigma, "inlier noise standard deviation");
}

void add_fitting(CLI::App* app, Flags& f) {
  app->add_option("--method", f.methods, "RQuMF | DeRQuMF | QuMF | QuMFPostK (repeatable)")->delimiter(',');
  app->add_option("--points", f.points, "points CSV (x,y[,z][,label])")->check(CLI::ExistingFile);
  app->add_option("--preference", f.preference, "preference matrix CSV")->check(CLI::ExistingFile);
  app->add_option("--epsilon", f.epsilon, "inlier threshold");
  app->add_option("--lambda1", f.lambda1, "model-count weight");
  app->add_option("--lambda2", f.lambda2, "constraint penalty weight");
  app->add_option("--models-per-point", f.models_per_point, "hypotheses per data point (default 6)");
  app->add_option("--n-models", f.n_models, "absolute hypothesis count (overrides --models-per-point)");
  app->add_option("--subproblem-size", f.subproblem_size, "decomposition block size (default 40)");
  app->add_option("--sa-samples", f.sa_samples, "annealing restarts (default 100)");
  app->add_option("--sa-sweeps", f.sa_sweeps, "sweeps per restart (default 1000)");
  app->add_option("--baseline-lambda", f.baseline_lambda, "model-count weight of the QuMF baseline");
  app->add_option("--k", f.k, "model count kept by QuMFPostK");
  app->add_option("--external-command", f.external_command, "backend command with {qubo} and {out} placeholders");
  app->add_flag("--no-gt-injection", f.no_gt_injection, "do not prepend ground-truth refits to the hypotheses");
  app->add_flag("--no-dedup", f.no_dedup, "keep duplicate preference columns");
  add_synthetic(app, f);
}

template <class T>
void take(const json& j, const char* key, std::optional<T>& dst) {
  if (!dst && j.contains(key)) dst = j.at(key).get<T>();
}

/// Fills every flag that was not given on the command line from the config file.
void merge_config_file(Flags& f) {
  if (!f.config_path) return;
  std::ifstream is(*f.config_path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config " + *f.config_path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> known{
      "scenario",    "methods",          "solver",        "points",          "preference",  "epsilon",
      "lambda1",     "lambda2",          "models_per_point", "n_models",     "subproblem_size", "sa_samples",
      "sa_sweeps",   "repeats",          "seed",          "grid",            "outlier_fraction", "total_points",
      "noise_sigma", "baseline_lambda",  "k",             "external_command", "gt_injection", "dedup"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("config: unknown key '" + key + "'");
  try {
    take(j, "scenario", f.scenario);
    take(j, "solver", f.solver);
    take(j, "points", f.points);
    take(j, "preference", f.preference);
    take(j, "epsilon", f.epsilon);
    take(j, "lambda1", f.lambda1);
    take(j, "lambda2", f.lambda2);
    take(j, "models_per_point", f.models_per_point);
    take(j, "n_models", f.n_models);
    take(j, "subproblem_size", f.subproblem_size);
    take(j, "sa_samples", f.sa_samples);
    take(j, "sa_sweeps", f.sa_sweeps);
    take(j, "repeats", f.repeats);
    take(j, "seed", f.seed);
    take(j, "outlier_fraction", f.outlier_fraction);
    take(j, "total_points", f.total_points);
    take(j, "noise_sigma", f.noise_sigma);
    take(j, "baseline_lambda", f.baseline_lambda);
    take(j, "k", f.k);
    take(j, "external_command", f.external_command);
    if (f.methods.empty() && j.contains("methods")) {
      if (j["methods"].is_string())
        f.methods = {j["methods"].get<std::string>()};
      else
        f.methods = j["methods"].get<std::vector<std::string>>();
    }
    if (f.grid.empty() && j.contains("grid")) f.grid = j["grid"].get<std::vector<double>>();
    if (!f.no_gt_injection && j.contains("gt_injection")) f.no_gt_injection = !j["gt_injection"].get<bool>();
    if (!f.no_dedup && j.contains("dedup")) f.no_dedup = !j["dedup"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig build_config(Flags& f) {
  merge_config_file(f);
  ExperimentConfig cfg;
  if (f.scenario) cfg.scenario = scenario_from_string(*f.scenario);
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : f.methods) cfg.methods.push_back(method_from_string(m));
  }
  if (f.solver) cfg.solver.kind = solver_from_string(*f.solver);
  if (f.points) cfg.points_path = *f.points;
  if (f.preference) cfg.preference_path = *f.preference;
  cfg.epsilon = f.epsilon;
  if (f.lambda1) cfg.params.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.params.lambda2 = *f.lambda2;
  if (f.models_per_point) cfg.models_per_point = *f.models_per_point;
  cfg.n_models = f.n_models;
  if (f.subproblem_size) cfg.decompose.subproblem_size = *f.subproblem_size;
  if (f.sa_samples) cfg.solver.sa.num_samples = *f.sa_samples;
  if (f.sa_sweeps) cfg.solver.sa.sweeps_per_sample = *f.sa_sweeps;
  if (f.repeats) cfg.repeats = *f.repeats;
  if (f.seed) cfg.seed = *f.seed;
  cfg.grid = f.grid;
  if (f.outlier_fraction) cfg.synthetic.outlier_fraction = *f.outlier_fraction;
  if (f.total_points) cfg.synthetic.total_points = *f.total_points;
  if (f.noise_sigma) cfg.synthetic.noise_sigma = *f.noise_sigma;
  if (f.baseline_lambda) cfg.baseline.lambda = *f.baseline_lambda;
  cfg.baseline.k = f.k;
  if (f.external_command) cfg.solver.external.command = *f.external_command;
  cfg.gt_injection = !f.no_gt_injection;
  cfg.pipeline_dedup = !f.no_dedup;
  if (cfg.scenario == Scenario::PlaneFit3D && !f.noise_sigma) cfg.synthetic.noise_sigma = 0.1;
  if (cfg.scenario == Scenario::PlaneFit3D && !f.outlier_fraction) cfg.synthetic.outlier_fraction = 0.0;
  if (cfg.scenario == Scenario::PlaneFit3D && !f.total_points) cfg.synthetic.total_points = 60;
  if (cfg.scenario == Scenario::PlaneFit3D && !f.n_models && !f.models_per_point) cfg.n_models = 40;
  if (cfg.solver.kind == SolverKind::ExternalAdapter && cfg.solver.external.command.empty())
    throw ConfigError("ExternalAdapter needs --external-command");
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  return os;
}

void write_json(const std::string& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

json model_to_json(const ModelHypothesis& m) {
  return {{"kind", m.kind() == ModelKind::Line2D ? "line" : "plane"},
          {"params", std::vector<double>(m.params().begin(), m.params().end())}};
}

int cmd_generate(Flags& f) {
  auto cfg = build_config(f);
  SyntheticConfig syn = cfg.synthetic;
  syn.seed = cfg.seed;
  syn.validate();
  const auto scene = cfg.scenario == Scenario::PlaneFit3D ? generate_cube_faces(syn) : generate_pentagon(syn);
  {
    auto os = open_out(f.out);
    write_points_csv(os, scene.points);
  }
  json models = json::array();
  for (const auto& m : scene.models) models.push_back(model_to_json(m));
  const auto models_path = std::filesystem::path(f.out).replace_extension(".models.json").string();
  write_json(models_path, {{"scenario", to_string(cfg.scenario)},
                           {"seed", cfg.seed},
                           {"total_points", syn.total_points},
                           {"outlier_fraction", syn.outlier_fraction},
                           {"noise_sigma", syn.noise_sigma},
                           {"models", models}});
  std::cout << "wrote " << scene.points.size() << " points to " << f.out << "\n";
  return kOk;
}

Instance fit_instance(ExperimentConfig cfg) {
  if (!cfg.preference_path.empty()) {
    cfg.scenario = Scenario::IngestedPreference;
    return make_instance(cfg, 0, 0);
  }
  if (!cfg.points_path.empty()) {
    auto pts = load_points_csv(cfg.points_path);
    const ModelKind kind = pts.dimension() == 3 ? ModelKind::Plane3D : ModelKind::Line2D;
    if (kind == ModelKind::Plane3D && !cfg.epsilon) cfg.epsilon = 0.5;
    const std::size_t m = cfg.n_models.value_or(cfg.models_per_point * pts.size());
    return make_instance_from_points(std::move(pts), kind, m, cfg.effective_epsilon(), cfg.gt_injection,
                                     derive_seed(cfg.seed, 2, 0, 0));
  }
  if (cfg.scenario == Scenario::IngestedPreference) throw ConfigError("fit needs --points or --preference");
  if (cfg.scenario == Scenario::PentagonSweepModels)
    cfg.grid = {static_cast<double>(cfg.n_models.value_or(cfg.models_per_point * cfg.synthetic.total_points))};
  else if (cfg.scenario == Scenario::PentagonSweepOutliers)
    cfg.grid = {cfg.synthetic.outlier_fraction};
  else
    cfg.grid = {0.0};
  return make_instance(cfg, 0, 0);
}

int cmd_fit(Flags& f) {
  if (!f.points && !f.preference && !f.config_path && !f.scenario)
    throw ConfigError("fit needs --points, --preference or a synthetic --scenario");
  auto cfg = build_config(f);
  if (cfg.methods.size() != 1) throw ConfigError("fit runs exactly one --method");
  const auto inst = fit_instance(cfg);
  const auto fit = run_method(inst, cfg.methods.front(), cfg, derive_seed(cfg.seed, 3, 0, 0), derive_seed(cfg.seed, 4, 0, 0));
  auto j = fit_result_to_json(fit, inst.preference, !f.no_timestamp);
  j["n_points"] = inst.preference.rows();
  j["n_models"] = inst.preference.cols();
  j["lambda1"] = cfg.params.lambda1;
  j["lambda2"] = cfg.params.lambda2;
  j["seed"] = cfg.seed;
  if (!inst.gt_labels.empty()) j["e_mis"] = inst.e_mis(fit.labels);
  write_json(f.out, j);
  std::cout << to_string(fit.method) << ": " << fit.selected.size() << " models, energy " << fit.energy;
  if (j.contains("e_mis")) std::cout << ", E_mis " << j["e_mis"].get<double>() << "%";
  std::cout << "\n";
  return kOk;
}

int cmd_bench(Flags& f) {
  auto cfg = build_config(f);
  const auto result = run_bench(cfg);
  write_bench_outputs(f.out, cfg, result);
  write_summary_table(std::cout, cfg, result);
  return kOk;
}

struct TuneFlags {
  std::size_t trials = 100;
  std::size_t startup = 20;
  std::uint64_t tune_seed = 0;
  std::string objective = "emis";
  std::vector<double> lambda1_range{0.01, 10.0};
  std::vector<double> lambda2_range{0.01, 10.0};
  bool linear = false;
};

int cmd_tune(Flags& f, const TuneFlags& t) {
  auto cfg = build_config(f);
  TuneSpace space;
  if (t.lambda1_range.size() != 2 || t.lambda2_range.size() != 2) throw ConfigError("ranges take two values");
  space.lambda1_range = {t.lambda1_range[0], t.lambda1_range[1]};
  space.lambda2_range = {t.lambda2_range[0], t.lambda2_range[1]};
  space.lambda1_log = space.lambda2_log = !t.linear;
  space.validate();
  TuneConfig tc;
  tc.n_trials = t.trials;
  tc.n_startup = std::min(t.startup, t.trials);
  tc.seed = t.tune_seed;
  tc.validate();

  TuneObjective objective;
  if (t.objective == "quadratic") {
    objective = [](double a, double b) { return (a - 1.7) * (a - 1.7) + (b - 0.1) * (b - 0.1); };
  } else if (t.objective == "emis") {
    if (cfg.methods.size() != 1) throw ConfigError("tune optimises exactly one --method");
    const Method method = cfg.methods.front();
    objective = [cfg, method](double a, double b) { return battery_mean_emis(cfg, method, QuboParams{a, b}); };
  } else {
    throw ConfigError("unknown objective '" + t.objective + "'");
  }
  const auto result = tune(space, tc, objective);

  std::filesystem::create_directories(f.out);
  {
    auto os = open_out((std::filesystem::path(f.out) / "history.csv").string());
    write_trial_history_csv(os, result.history, !f.no_timestamp);
  }
  write_json((std::filesystem::path(f.out) / "best.json").string(),
             {{"lambda1", result.best.lambda1},
              {"lambda2", result.best.lambda2},
              {"objective", result.best.objective},
              {"trials", result.history.size()},
              {"seed", tc.seed}});
  std::cout << "best lambda1 " << result.best.lambda1 << " lambda2 " << result.best.lambda2 << " objective "
            << result.best.objective << "\n";
  return kOk;
}

struct EvalFlags {
  std::string gt;
  std::string result;
  bool free_outliers = false;
};

std::vector<int> labels_from_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  if (std::filesystem::path(path).extension() == ".json") {
    try {
      return json::parse(is).at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  const auto pts = read_points_csv(is);
  if (!pts.has_labels()) throw ParseError(path + ": no label column");
  return *pts.labels();
}

int cmd_eval(const EvalFlags& e, const std::string& out) {
  const auto gt = labels_from_file(e.gt);
  const auto est = labels_from_file(e.result);
  const auto report = misclassification(gt, est, e.free_outliers ? OutlierMode::Free : OutlierMode::Pinned);
  if (!out.empty()) write_json(out, eval_report_to_json(report));
  std::cout << "E_mis " << report.e_mis << "% (" << report.misclassified << "/" << report.n_points << ")\n";
  return kOk;
}

int cmd_solve(Flags& f, const std::string& qubo_path) {
  auto cfg = build_config(f);
  std::ifstream is(qubo_path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + qubo_path);
  QuboProblem problem;
  try {
    problem = qubo_from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw ParseError(std::string("QUBO JSON: ") + e.what());
  }
  cfg.solver.sa.seed = cfg.seed;
  const auto set = solve(problem, cfg.solver);
  write_json(f.out, sample_set_to_json(set, !f.no_timestamp));
  std::cout << "best energy " << best(set).energy << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-robust multi-model fitting as a QUBO"};
  app.require_subcommand(1);

  Flags f;
  auto* generate = app.add_subcommand("generate", "write a synthetic point set and its ground-truth models");
  add_common(generate, f);
  add_synthetic(generate, f);

  auto* fit = app.add_subcommand("fit", "fit one problem and write the result JSON");
  add_common(fit, f);
  add_fitting(fit, f);

  auto* bench = app.add_subcommand("bench", "run a repeated sweep and write runs/summary CSVs");
  add_common(bench, f);
  add_fitting(bench, f);
  bench->add_option("--repeats", f.repeats, "repeats per setting (default 20)");
  bench->add_option("--grid", f.grid, "model counts or outlier fractions")->delimiter(',');

  TuneFlags t;
  auto* tune_cmd = app.add_subcommand("tune", "search lambda1/lambda2 and write best.json + history.csv");
  add_common(tune_cmd, f);
  add_fitting(tune_cmd, f);
  tune_cmd->add_option("--repeats", f.repeats, "repeats per battery setting");
  tune_cmd->add_option("--grid", f.grid, "battery settings")->delimiter(',');
  tune_cmd->add_option("--trials", t.trials, "trial budget (default 100)");
  tune_cmd->add_option("--startup", t.startup, "random warm-up trials (default 20)");
  tune_cmd->add_option("--tune-seed", t.tune_seed, "search seed");
  tune_cmd->add_option("--objective", t.objective, "emis | quadratic");
  tune_cmd->add_option("--lambda1-range", t.lambda1_range, "lo,hi")->delimiter(',');
  tune_cmd->add_option("--lambda2-range", t.lambda2_range, "lo,hi")->delimiter(',');
  tune_cmd->add_flag("--linear", t.linear, "search in linear rather than log space");

  EvalFlags e;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "misclassification error of a result against ground truth");
  eval_cmd->add_option("--gt", e.gt, "points CSV with labels, or JSON with a labels array")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--result", e.result, "fit result JSON or labelled CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "optional report JSON");
  eval_cmd->add_flag("--free-outliers", e.free_outliers, "match label 0 like any other label");

  std::string qubo_path;
  auto* solve_cmd = app.add_subcommand("solve", "solve a QUBO JSON and write the sample set JSON");
  add_common(solve_cmd, f);
  solve_cmd->add_option("--qubo", qubo_path, "QUBO JSON")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--sa-samples", f.sa_samples, "annealing restarts");
  solve_cmd->add_option("--sa-sweeps", f.sa_sweeps, "sweeps per restart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(f);
    if (*fit) return cmd_fit(f);
    if (*bench) return cmd_bench(f);
    if (*tune_cmd) return cmd_tune(f, t);
    if (*eval_cmd) return cmd_eval(e, eval_out);
    if (*solve_cmd) return cmd_solve(f, qubo_path);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const ParseError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
