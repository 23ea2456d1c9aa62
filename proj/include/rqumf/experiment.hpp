// Reproducible experiment harness shared by the CLI and the acceptance suite:
// scenario instances, per-method runs, sweeps and their CSV / table outputs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"
#include "rqumf/eval.hpp"
#include "rqumf/geometry.hpp"
#include "rqumf/pipeline.hpp"
#include "rqumf/preference.hpp"
#include "rqumf/qubo.hpp"
#include "rqumf/solvers.hpp"

namespace rqumf {

enum class Scenario { PentagonSweepOutliers, PentagonSweepModels, PlaneFit3D, IngestedPreference };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::PentagonSweepOutliers:
      return "PentagonSweepOutliers";
    case Scenario::PentagonSweepModels:
      return "PentagonSweepModels";
    case Scenario::PlaneFit3D:
      return "PlaneFit3D";
    case Scenario::IngestedPreference:
      return "IngestedPreference";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  for (auto v : {Scenario::PentagonSweepOutliers, Scenario::PentagonSweepModels, Scenario::PlaneFit3D,
                 Scenario::IngestedPreference})
    if (to_string(v) == s) return v;
  throw InvalidArgument("unknown scenario '" + s + "'");
}

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::SA:
      return "SA";
    case SolverKind::Exhaustive:
      return "Exhaustive";
    case SolverKind::ExternalAdapter:
      return "ExternalAdapter";
  }
  return "?";
}

inline SolverKind solver_from_string(const std::string& s) {
  for (auto v : {SolverKind::SA, SolverKind::Exhaustive, SolverKind::ExternalAdapter})
    if (to_string(v) == s) return v;
  throw InvalidArgument("unknown solver '" + s + "'");
}

/// Penalty weights found by tuning on pentagon batteries (17-50% outliers,
/// 40 hypotheses, epsilon = 3 sigma).
inline constexpr QuboParams kSyntheticLineParams{0.0302, 0.0128};
inline constexpr double kSyntheticBaselineLambda = 0.5;

struct ExperimentConfig {
  Scenario scenario = Scenario::PentagonSweepModels;
  std::vector<Method> methods{Method::RQuMF};
  SolverConfig solver{};
  SyntheticConfig synthetic{};
  std::optional<double> epsilon;  // default 3 * noise_sigma (lines) or 0.5 (planes)
  QuboParams params = kSyntheticLineParams;
  DecomposeConfig decompose{};
  BaselineConfig baseline{kSyntheticBaselineLambda, std::nullopt};
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  std::size_t models_per_point = 6;
  std::optional<std::size_t> n_models;  // overrides models_per_point
  bool gt_injection = true;
  std::vector<double> grid;  // m values or outlier fractions; scenario default when empty
  std::string points_path;
  std::string preference_path;
  bool pipeline_dedup = true;

  double effective_epsilon() const {
    if (epsilon) return *epsilon;
    return scenario == Scenario::PlaneFit3D ? 0.5 : 3.0 * synthetic.noise_sigma;
  }

  std::vector<double> effective_grid() const {
    if (!grid.empty()) return grid;
    switch (scenario) {
      case Scenario::PentagonSweepModels:
        return {20, 50, 100, 500, 1000};
      case Scenario::PentagonSweepOutliers:
        return {0.0, 0.1, 1.0 / 6.0, 0.2, 1.0 / 3.0, 0.4, 0.5};
      default:
        return {0.0};
    }
  }

  void validate() const {
    synthetic.validate();
    params.validate();
    decompose.validate();
    baseline.validate();
    solver.sa.validate();
    if (methods.empty()) throw InvalidArgument("ExperimentConfig: no methods");
    if (repeats == 0) throw InvalidArgument("ExperimentConfig: repeats must be positive");
    if (models_per_point == 0) throw InvalidArgument("ExperimentConfig: models_per_point must be positive");
    if (!(effective_epsilon() > 0.0)) throw InvalidArgument("ExperimentConfig: epsilon must be positive");
    for (double g : effective_grid()) {
      if (scenario == Scenario::PentagonSweepModels && !(g >= 1.0 && g == std::floor(g)))
        throw InvalidArgument("ExperimentConfig: model-count grid needs positive integers");
      if (scenario == Scenario::PentagonSweepOutliers && !(g >= 0.0 && g <= 0.5))
        throw InvalidArgument("ExperimentConfig: outlier grid values must lie in [0, 0.5]");
    }
    if (scenario == Scenario::IngestedPreference && preference_path.empty())
      throw InvalidArgument("ExperimentConfig: IngestedPreference needs a preference matrix");
  }
};

/// One fitted problem: data, hypotheses and the shared preference matrix.
struct Instance {
  PointSet points;
  std::vector<ModelHypothesis> models;  // aligned with P's columns; empty when ingested
  PreferenceMatrix preference;
  std::vector<int> gt_labels;
  /// Ground-truth label sets: a point's own label plus every ground-truth
  /// structure it is an inlier of (empty when no ground-truth models exist).
  std::vector<std::vector<int>> gt_sets;

  double e_mis(std::span<const int> estimated) const {
    if (!gt_sets.empty()) return misclassification_multi(gt_sets, estimated).e_mis;
    return misclassification(gt_labels, estimated).e_mis;
  }

  LabelContext label_context() const {
    if (models.empty()) return {};
    return {&points, models};
  }
};

inline ModelKind scenario_kind(Scenario s) { return s == Scenario::PlaneFit3D ? ModelKind::Plane3D : ModelKind::Line2D; }

inline SyntheticConfig synthetic_for_setting(const ExperimentConfig& cfg, double setting, std::uint64_t seed) {
  SyntheticConfig syn = cfg.synthetic;
  syn.seed = seed;
  if (cfg.scenario == Scenario::PentagonSweepOutliers) syn.outlier_fraction = setting;
  return syn;
}

inline std::size_t models_for_setting(const ExperimentConfig& cfg, double setting, std::size_t n_points) {
  if (cfg.scenario == Scenario::PentagonSweepModels) return static_cast<std::size_t>(setting);
  if (cfg.n_models) return *cfg.n_models;
  return cfg.models_per_point * n_points;
}

/// Label sets {own label} + {k : residual(gt_models[k-1], x) < epsilon}.
inline std::vector<std::vector<int>> ground_truth_label_sets(const PointSet& points,
                                                             std::span<const ModelHypothesis> gt_models,
                                                             double epsilon) {
  if (!points.has_labels()) throw InvalidArgument("ground_truth_label_sets: point set has no labels");
  std::vector<std::vector<int>> sets;
  sets.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<int> set{(*points.labels())[i]};
    for (std::size_t k = 0; k < gt_models.size(); ++k) {
      const int label = static_cast<int>(k + 1);
      if (label != set.front() && residual(gt_models[k], points[i]) < epsilon) set.push_back(label);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

/// Builds hypotheses and P for a point set; GT refits are prepended when requested.
inline Instance make_instance_from_points(PointSet points, ModelKind kind, std::size_t m, double epsilon,
                                          bool gt_injection, std::uint64_t sampling_seed) {
  Instance inst;
  inst.models = gt_injection && points.has_labels() ? sample_with_ground_truth(points, kind, m, sampling_seed)
                                                    : sample_hypotheses(points, kind, m, sampling_seed);
  inst.preference = build_preference(points, inst.models, ConsensusConfig{epsilon});
  if (points.has_labels()) {
    inst.gt_labels = *points.labels();
    inst.gt_sets = ground_truth_label_sets(points, refit_ground_truth(points, kind), epsilon);
  }
  inst.points = std::move(points);
  return inst;
}

inline Instance make_instance(const ExperimentConfig& cfg, std::size_t setting_index, std::size_t repeat) {
  const double setting = cfg.effective_grid().at(setting_index);
  const std::uint64_t data_seed = derive_seed(cfg.seed, 1, setting_index, repeat);
  const std::uint64_t sampling_seed = derive_seed(cfg.seed, 2, setting_index, repeat);
  const double eps = cfg.effective_epsilon();
  switch (cfg.scenario) {
    case Scenario::PentagonSweepModels:
    case Scenario::PentagonSweepOutliers: {
      if (!cfg.points_path.empty()) {
        auto pts = load_points_csv(cfg.points_path);
        const auto m = models_for_setting(cfg, setting, pts.size());
        return make_instance_from_points(std::move(pts), ModelKind::Line2D, m, eps, cfg.gt_injection, sampling_seed);
      }
      auto scene = generate_pentagon(synthetic_for_setting(cfg, setting, data_seed));
      const auto m = models_for_setting(cfg, setting, scene.points.size());
      return make_instance_from_points(std::move(scene.points), ModelKind::Line2D, m, eps, cfg.gt_injection,
                                       sampling_seed);
    }
    case Scenario::PlaneFit3D: {
      PointSet pts;
      if (!cfg.points_path.empty()) {
        pts = load_points_csv(cfg.points_path);
      } else {
        pts = generate_cube_faces(synthetic_for_setting(cfg, setting, data_seed)).points;
      }
      const auto m = models_for_setting(cfg, setting, pts.size());
      return make_instance_from_points(std::move(pts), ModelKind::Plane3D, m, eps, cfg.gt_injection, sampling_seed);
    }
    case Scenario::IngestedPreference: {
      Instance inst;
      inst.preference = load_preference_with_sidecar(cfg.preference_path);
      if (!cfg.points_path.empty()) {
        inst.points = load_points_csv(cfg.points_path);
        if (inst.points.size() != inst.preference.rows())
          throw DimensionMismatch("points and preference matrix disagree on the number of points");
        if (inst.points.has_labels()) inst.gt_labels = *inst.points.labels();
      }
      return inst;
    }
  }
  throw InvalidArgument("make_instance: unknown scenario");
}

inline FitResult run_method(const Instance& inst, Method method, const ExperimentConfig& cfg, std::uint64_t solver_seed,
                            std::uint64_t partition_seed) {
  SolverConfig solver = cfg.solver;
  solver.sa.seed = solver_seed;
  const PipelineOptions options{cfg.pipeline_dedup};
  const auto ctx = inst.label_context();
  switch (method) {
    case Method::RQuMF:
      return fit_rqumf(inst.preference, cfg.params, solver, ctx, options);
    case Method::DeRQuMF: {
      DecomposeConfig dec = cfg.decompose;
      dec.partition_seed = partition_seed;
      return fit_derqumf(inst.preference, cfg.params, dec, solver, ctx, options);
    }
    case Method::QuMF: {
      BaselineConfig base = cfg.baseline;
      base.k.reset();
      return fit_qumf_baseline(inst.preference, base, solver, ctx, options);
    }
    case Method::QuMFPostK: {
      BaselineConfig base = cfg.baseline;
      if (!base.k) {
        int k = 0;
        for (int l : inst.gt_labels) k = std::max(k, l);
        if (k == 0) throw InvalidArgument("QuMFPostK needs k or ground-truth labels");
        base.k = static_cast<std::size_t>(k);
      }
      return fit_qumf_baseline(inst.preference, base, solver, ctx, options);
    }
  }
  throw InvalidArgument("run_method: unknown method");
}

struct RunRow {
  std::size_t setting_index = 0;
  double setting = 0.0;
  Method method = Method::RQuMF;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double e_mis = 0.0;
  std::size_t n_selected = 0;
  double energy = 0.0;
  double penalty = 0.0;
};

struct SummaryRow {
  std::size_t setting_index = 0;
  double setting = 0.0;
  Method method = Method::RQuMF;
  RunStats stats;
};

struct BenchResult {
  std::vector<RunRow> runs;  // ordered by setting, repeat, method
  std::vector<SummaryRow> summary;
};

/// Runs every (setting, repeat) cell; each cell builds one instance and runs
/// all methods on it. Cells are independent and may run in parallel.
inline BenchResult run_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto grid = cfg.effective_grid();
  const std::size_t cells = grid.size() * cfg.repeats;
  std::vector<std::vector<RunRow>> per_cell(cells);
  std::vector<std::string> errors(cells);

  const auto run_cell = [&](std::size_t cell) {
    const std::size_t s = cell / cfg.repeats, r = cell % cfg.repeats;
    try {
      const auto inst = make_instance(cfg, s, r);
      if (inst.gt_labels.empty()) throw InvalidArgument("bench needs ground-truth labels");
      const std::uint64_t solver_seed = derive_seed(cfg.seed, 3, s, r);
      const std::uint64_t partition_seed = derive_seed(cfg.seed, 4, s, r);
      for (auto method : cfg.methods) {
        const auto fit = run_method(inst, method, cfg, solver_seed, partition_seed);
        RunRow row{s, grid[s], method, r, solver_seed, inst.e_mis(fit.labels),
                   count_selected(fit), fit.energy, fit.penalty};
        per_cell[cell].push_back(row);
      }
    } catch (const std::exception& e) {
      errors[cell] = e.what();
    }
  };

  const std::size_t workers = std::min(thread_budget(0), cells);
  if (workers <= 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < cells; c += workers) run_cell(c);
      });
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);

  BenchResult out;
  for (auto& cell : per_cell) out.runs.insert(out.runs.end(), cell.begin(), cell.end());
  for (std::size_t s = 0; s < grid.size(); ++s)
    for (auto method : cfg.methods) {
      std::vector<RunRecord> records;
      for (const auto& row : out.runs)
        if (row.setting_index == s && row.method == method) records.push_back({row.e_mis, row.n_selected, row.seed});
      out.summary.push_back({s, grid[s], method, aggregate(records)});
    }
  return out;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::string setting_label(Scenario scenario, double setting) {
  if (scenario == Scenario::PentagonSweepModels) return format_number(setting);
  if (scenario == Scenario::PentagonSweepOutliers) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << 100.0 * setting << '%';
    return os.str();
  }
  return "-";
}

inline void write_runs_csv(std::ostream& os, const BenchResult& r) {
  os << "setting_index,setting,method,repeat,seed,e_mis,n_selected,energy,penalty\n";
  for (const auto& row : r.runs)
    os << row.setting_index << ',' << format_number(row.setting) << ',' << to_string(row.method) << ',' << row.repeat
       << ',' << row.seed << ',' << format_number(row.e_mis) << ',' << row.n_selected << ','
       << format_number(row.energy) << ',' << format_number(row.penalty) << '\n';
}

/// std is left empty when a cell has a single run.
inline void write_summary_csv(std::ostream& os, const BenchResult& r) {
  os << "setting_index,setting,method,runs,mean_e_mis,median_e_mis,std_e_mis,mean_selected\n";
  for (const auto& s : r.summary) {
    os << s.setting_index << ',' << format_number(s.setting) << ',' << to_string(s.method) << ','
       << s.stats.e_mis.size() << ',' << format_number(s.stats.mean) << ',' << format_number(s.stats.median) << ',';
    if (std::isfinite(s.stats.std)) os << format_number(s.stats.std);
    os << ',' << format_number(s.stats.mean_selected) << '\n';
  }
}

/// Markdown table: one row per setting, one column per method, mean E_mis [%].
inline void write_summary_table(std::ostream& os, const ExperimentConfig& cfg, const BenchResult& r) {
  const auto grid = cfg.effective_grid();
  const std::string head = cfg.scenario == Scenario::PentagonSweepModels     ? "# of Models"
                           : cfg.scenario == Scenario::PentagonSweepOutliers ? "Outliers"
                                                                             : "Setting";
  os << "| " << head;
  for (auto m : cfg.methods) os << " | " << to_string(m);
  os << " |\n|---";
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) os << "|---";
  os << "|\n";
  for (std::size_t s = 0; s < grid.size(); ++s) {
    os << "| " << setting_label(cfg.scenario, grid[s]);
    for (auto m : cfg.methods)
      for (const auto& row : r.summary)
        if (row.setting_index == s && row.method == m) {
          std::ostringstream cell;
          cell.setf(std::ios::fixed);
          cell.precision(2);
          cell << row.stats.mean;
          os << " | " << cell.str();
        }
    os << " |\n";
  }
}

inline void write_bench_outputs(const std::string& out_dir, const ExperimentConfig& cfg, const BenchResult& r) {
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(out_dir) / name).string(); };
  std::ofstream runs(path("runs.csv"), std::ios::binary), summary(path("summary.csv"), std::ios::binary),
      table(path("summary.md"), std::ios::binary);
  if (!runs || !summary || !table) throw Error("cannot write bench outputs to " + out_dir);
  write_runs_csv(runs, r);
  write_summary_csv(summary, r);
  write_summary_table(table, cfg, r);
}

/// Mean E_mis of one method over a seeded battery of pentagon problems; the
/// objective used for lambda tuning.
inline double battery_mean_emis(const ExperimentConfig& cfg, Method method, const QuboParams& params) {
  ExperimentConfig local = cfg;
  local.params = params;
  const auto grid = local.effective_grid();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < grid.size(); ++s)
    for (std::size_t r = 0; r < local.repeats; ++r) {
      const auto inst = make_instance(local, s, r);
      const auto fit = run_method(inst, method, local, derive_seed(local.seed, 3, s, r), derive_seed(local.seed, 4, s, r));
      total += inst.e_mis(fit.labels);
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace rqumf
