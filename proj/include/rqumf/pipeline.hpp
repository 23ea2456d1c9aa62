// End-to-end fitting: one-shot robust max-coverage (RQuMF), its column
// decomposition (De-RQuMF), residual-based labelling, and the set-cover
// baseline (QuMF) with optional top-k post-processing.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"
#include "rqumf/geometry.hpp"
#include "rqumf/preference.hpp"
#include "rqumf/qubo.hpp"
#include "rqumf/solvers.hpp"

namespace rqumf {

enum class Method { RQuMF, DeRQuMF, QuMF, QuMFPostK };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::RQuMF:
      return "RQuMF";
    case Method::DeRQuMF:
      return "DeRQuMF";
    case Method::QuMF:
      return "QuMF";
    case Method::QuMFPostK:
      return "QuMFPostK";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : {Method::RQuMF, Method::DeRQuMF, Method::QuMF, Method::QuMFPostK})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown method '" + s + "'");
}

struct FitResult {
  std::vector<std::size_t> selected;  // column indices into the input P, ascending
  std::vector<int> labels;            // 0 = outlier, k = selected[k - 1]
  double energy = 0.0;
  double penalty = 0.0;  // ||P z - y||^2
  Bits y;
  Bits z;  // over all input columns
  Method method = Method::RQuMF;
  nlohmann::json diagnostics = nlohmann::json::object();
};

inline std::size_t count_selected(const FitResult& result) { return result.selected.size(); }

struct DecomposeConfig {
  std::size_t subproblem_size = 40;
  std::uint64_t partition_seed = 0;
  bool shuffle_each_round = true;

  void validate() const {
    if (subproblem_size < 2) throw InvalidArgument("DecomposeConfig: subproblem size must be >= 2");
  }
};

struct BaselineConfig {
  double lambda = 0.5;
  std::optional<std::size_t> k;

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("BaselineConfig: lambda must be >= 0");
    if (k && *k == 0) throw InvalidArgument("BaselineConfig: k must be positive");
  }
};

/// Residual lookup used to break overlaps; models are indexed like P's columns.
struct LabelContext {
  const PointSet* points = nullptr;
  std::span<const ModelHypothesis> models{};

  bool has_residuals() const noexcept { return points != nullptr && !models.empty(); }
};

/// Labels points from a selection: a point covered by exactly one selected
/// column gets that column's 1-based position in `selected`; overlaps go to
/// the smallest residual (or, without residuals, the larger consensus set),
/// ties to the lower position; uncovered points get 0.
inline std::vector<int> assign_labels(const PreferenceMatrix& p, std::span<const std::size_t> selected,
                                      const LabelContext& context = {}) {
  for (auto j : selected)
    if (j >= p.cols()) throw InvalidArgument("assign_labels: selected column out of range");
  if (context.has_residuals() && (context.models.size() != p.cols() || context.points->size() != p.rows()))
    throw DimensionMismatch("assign_labels: residual context does not match P");
  std::vector<std::size_t> consensus;
  if (!context.has_residuals()) {
    consensus.reserve(selected.size());
    for (auto j : selected) consensus.push_back(p.column_support(j).size());
  }
  std::vector<int> labels(p.rows(), 0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    int chosen = 0;
    double best_residual = 0.0;
    for (std::size_t k = 0; k < selected.size(); ++k) {
      if (!p(i, selected[k])) continue;
      if (chosen == 0) {
        chosen = static_cast<int>(k + 1);
        if (context.has_residuals()) best_residual = residual(context.models[selected[k]], (*context.points)[i]);
        continue;
      }
      if (context.has_residuals()) {
        const double r = residual(context.models[selected[k]], (*context.points)[i]);
        if (r < best_residual) {
          best_residual = r;
          chosen = static_cast<int>(k + 1);
        }
      } else if (consensus[k] > consensus[static_cast<std::size_t>(chosen - 1)]) {
        chosen = static_cast<int>(k + 1);
      }
    }
    labels[i] = chosen;
  }
  return labels;
}

namespace detail {

inline void require_nonempty(const PreferenceMatrix& p, const char* who) {
  if (p.rows() == 0 || p.cols() == 0) throw InvalidArgument(std::string(who) + ": empty preference matrix");
}

inline Bits coverage_of(const PreferenceMatrix& p, std::span<const std::size_t> selected) {
  Bits y(p.rows(), 0);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (auto j : selected)
      if (p(i, j)) {
        y[i] = 1;
        break;
      }
  return y;
}

inline double coverage_penalty(const PreferenceMatrix& p, std::span<const std::uint8_t> y,
                               std::span<const std::size_t> selected) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    long r = -static_cast<long>(y[i]);
    for (auto j : selected) r += p(i, j);
    total += static_cast<double>(r * r);
  }
  return total;
}

inline SolverConfig with_seed(SolverConfig config, std::uint64_t seed) {
  config.sa.seed = seed;
  return config;
}

struct SubSolve {
  std::vector<std::size_t> selected;  // positions in the sub-matrix
  Bits w;
  double energy;
  std::size_t unique_samples;
  double solver_ms;
};

inline SubSolve solve_rqumf_block(const PreferenceMatrix& block, const QuboParams& params,
                                  const SolverConfig& solver) {
  const auto qubo = build_rqumf_qubo(block, params);
  const auto set = solve(qubo, solver);
  const auto& top = best(set);
  SubSolve out{{}, top.w, top.energy, set.samples.size(), set.wall_time_ms};
  for (std::size_t j = 0; j < block.cols(); ++j)
    if (top.w[block.rows() + j]) out.selected.push_back(j);
  return out;
}

inline FitResult finish_rqumf(const PreferenceMatrix& p, const QuboParams& params, std::span<const std::size_t> columns,
                              const SubSolve& sub, Method method, const LabelContext& context,
                              nlohmann::json diagnostics) {
  FitResult r;
  r.method = method;
  for (auto j : sub.selected) r.selected.push_back(columns[j]);
  std::sort(r.selected.begin(), r.selected.end());
  r.y.assign(sub.w.begin(), sub.w.begin() + static_cast<std::ptrdiff_t>(p.rows()));
  r.z.assign(p.cols(), 0);
  for (auto j : r.selected) r.z[j] = 1;
  r.penalty = coverage_penalty(p, r.y, r.selected);
  double linear = 0.0;
  for (auto v : r.y) linear -= v;
  r.energy = linear + params.lambda1 * static_cast<double>(r.selected.size()) + params.lambda2 * r.penalty;
  r.labels = assign_labels(p, r.selected, context);
  diagnostics["final_energy_subproblem"] = sub.energy;
  diagnostics["unique_samples"] = sub.unique_samples;
  r.diagnostics = std::move(diagnostics);
  return r;
}

}  // namespace detail

struct PipelineOptions {
  /// Collapse identical consensus sets before solving (lowest index kept).
  bool dedup_columns = true;
};

/// One-shot robust fit: build the (y; z) QUBO for P, solve, keep the best state.
inline FitResult fit_rqumf(const PreferenceMatrix& p, const QuboParams& params, const SolverConfig& solver,
                           const LabelContext& context = {}, const PipelineOptions& options = {}) {
  detail::require_nonempty(p, "fit_rqumf");
  params.validate();
  std::vector<std::size_t> columns(p.cols());
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  PreferenceMatrix work = p;
  if (options.dedup_columns) {
    auto reduced = dedup_columns(p);
    columns = std::move(reduced.kept);
    work = std::move(reduced.matrix);
  }
  const auto sub = detail::solve_rqumf_block(work, params, solver);
  nlohmann::json diag{{"columns_in", p.cols()},
                      {"columns_after_dedup", work.cols()},
                      {"qubo_vars", work.rows() + work.cols()},
                      {"subproblems", 1},
                      {"rounds", 0},
                      {"solver_ms", sub.solver_ms}};
  return detail::finish_rqumf(p, params, columns, sub, Method::RQuMF, context, std::move(diag));
}

/// Decomposed fit: while more than `subproblem_size` columns survive, split
/// them into blocks of at most that size, solve each block with all n point
/// variables and keep only the selected columns; then solve the survivors
/// once. A round that removes nothing ends the loop early.
inline FitResult fit_derqumf(const PreferenceMatrix& p, const QuboParams& params, const DecomposeConfig& decompose,
                             const SolverConfig& solver, const LabelContext& context = {},
                             const PipelineOptions& options = {}) {
  detail::require_nonempty(p, "fit_derqumf");
  params.validate();
  decompose.validate();
  std::vector<std::size_t> base(p.cols());
  std::iota(base.begin(), base.end(), std::size_t{0});
  PreferenceMatrix work = p;
  if (options.dedup_columns) {
    auto reduced = dedup_columns(p);
    base = std::move(reduced.kept);
    work = std::move(reduced.matrix);
  }

  std::vector<std::size_t> survivors(work.cols());
  std::iota(survivors.begin(), survivors.end(), std::size_t{0});
  auto survivor_history = nlohmann::json::array({survivors.size()});
  std::size_t rounds = 0, subproblems = 0;
  bool stalled = false;
  double solver_ms = 0.0;

  while (survivors.size() > decompose.subproblem_size) {
    if (decompose.shuffle_each_round) {
      Rng rng(derive_seed(decompose.partition_seed, rounds));
      std::shuffle(survivors.begin(), survivors.end(), rng);
    }
    std::vector<std::size_t> next;
    for (std::size_t start = 0, block = 0; start < survivors.size(); start += decompose.subproblem_size, ++block) {
      const std::size_t stop = std::min(survivors.size(), start + decompose.subproblem_size);
      const std::span<const std::size_t> cols(survivors.data() + start, stop - start);
      const auto sub = detail::solve_rqumf_block(work.select_columns(cols), params,
                                                 detail::with_seed(solver, derive_seed(solver.sa.seed, rounds + 1, block)));
      solver_ms += sub.solver_ms;
      ++subproblems;
      for (auto j : sub.selected) next.push_back(cols[j]);
    }
    ++rounds;
    survivor_history.push_back(next.size());
    if (next.empty()) {
      FitResult empty;
      empty.method = Method::DeRQuMF;
      empty.labels.assign(p.rows(), 0);
      empty.y.assign(p.rows(), 0);
      empty.z.assign(p.cols(), 0);
      empty.diagnostics = {{"columns_in", p.cols()},     {"columns_after_dedup", work.cols()},
                           {"rounds", rounds},           {"subproblems", subproblems},
                           {"survivors", survivor_history}, {"stalled", false},
                           {"empty_survivors", true},    {"solver_ms", solver_ms}};
      return empty;
    }
    stalled = next.size() == survivors.size();
    survivors = std::move(next);
    if (stalled) break;
  }

  std::sort(survivors.begin(), survivors.end());
  const auto sub = detail::solve_rqumf_block(work.select_columns(survivors), params, solver);
  solver_ms += sub.solver_ms;
  ++subproblems;
  std::vector<std::size_t> columns;
  columns.reserve(survivors.size());
  for (auto j : survivors) columns.push_back(base[j]);
  nlohmann::json diag{{"columns_in", p.cols()},
                      {"columns_after_dedup", work.cols()},
                      {"qubo_vars", work.rows() + survivors.size()},
                      {"rounds", rounds},
                      {"subproblems", subproblems},
                      {"survivors", survivor_history},
                      {"stalled", stalled},
                      {"solver_ms", solver_ms}};
  return detail::finish_rqumf(p, params, columns, sub, Method::DeRQuMF, context, std::move(diag));
}

/// Set-cover QUBO over model variables only: lambda 1^T z + ||P z - 1_n||^2.
inline QuboProblem build_qumf_qubo(const PreferenceMatrix& p, double lambda) {
  const auto n = static_cast<Eigen::Index>(p.rows());
  const auto m = static_cast<Eigen::Index>(p.cols());
  LinearConstraint cover{Eigen::MatrixXd::Zero(n, m), Eigen::VectorXd::Ones(n), 1.0};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      cover.a(i, j) = p(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : 0.0;
  return fold_constraints(Eigen::MatrixXd::Zero(m, m), Eigen::VectorXd::Constant(m, lambda), std::span(&cover, 1));
}

inline double qumf_energy(const PreferenceMatrix& p, double lambda, std::span<const std::size_t> selected) {
  double e = lambda * static_cast<double>(selected.size());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    long r = -1;
    for (auto j : selected) r += p(i, j);
    e += static_cast<double>(r * r);
  }
  return e;
}

/// Keeps the k selected columns with the largest consensus (ties: lower index)
/// and relabels; points no longer covered become outliers.
inline FitResult post_process_top_k(const PreferenceMatrix& p, const FitResult& in, std::size_t k, double lambda,
                                    const LabelContext& context = {}) {
  std::vector<std::size_t> order = in.selected;
  std::vector<std::size_t> sizes(p.cols(), 0);
  for (auto j : order) sizes[j] = p.column_support(j).size();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  if (order.size() > k) order.resize(k);
  std::sort(order.begin(), order.end());

  FitResult out = in;
  out.method = Method::QuMFPostK;
  out.selected = order;
  out.z.assign(p.cols(), 0);
  for (auto j : order) out.z[j] = 1;
  out.y = detail::coverage_of(p, order);
  out.penalty = detail::coverage_penalty(p, out.y, order);
  out.energy = qumf_energy(p, lambda, order);
  out.labels = assign_labels(p, order, context);
  out.diagnostics["post_processing_k"] = k;
  out.diagnostics["selected_before_post_processing"] = in.selected.size();
  return out;
}

/// Non-robust set-cover baseline; every point is meant to be covered.
inline FitResult fit_qumf_baseline(const PreferenceMatrix& p, const BaselineConfig& config, const SolverConfig& solver,
                                   const LabelContext& context = {}, const PipelineOptions& options = {}) {
  detail::require_nonempty(p, "fit_qumf_baseline");
  config.validate();
  std::vector<std::size_t> columns(p.cols());
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  PreferenceMatrix work = p;
  if (options.dedup_columns) {
    auto reduced = dedup_columns(p);
    columns = std::move(reduced.kept);
    work = std::move(reduced.matrix);
  }
  const auto set = solve(build_qumf_qubo(work, config.lambda), solver);
  const auto& top = best(set);

  FitResult r;
  r.method = Method::QuMF;
  for (std::size_t j = 0; j < work.cols(); ++j)
    if (top.w[j]) r.selected.push_back(columns[j]);
  std::sort(r.selected.begin(), r.selected.end());
  r.z.assign(p.cols(), 0);
  for (auto j : r.selected) r.z[j] = 1;
  r.y = detail::coverage_of(p, r.selected);
  r.penalty = detail::coverage_penalty(p, r.y, r.selected);
  r.energy = top.energy;
  r.labels = assign_labels(p, r.selected, context);
  r.diagnostics = {{"columns_in", p.cols()},
                   {"columns_after_dedup", work.cols()},
                   {"qubo_vars", work.cols()},
                   {"unique_samples", set.samples.size()},
                   {"solver_ms", set.wall_time_ms}};
  if (config.k) return post_process_top_k(p, r, *config.k, config.lambda, context);
  return r;
}

// ---------------------------------------------------------------------------
// FitResult JSON: {method, selected:[col ids], labels, energy, penalty, diagnostics}

inline nlohmann::json fit_result_to_json(const FitResult& r, const PreferenceMatrix& p, bool include_timing = true) {
  std::vector<std::size_t> ids;
  for (auto j : r.selected) ids.push_back(p.column_ids()[j]);
  auto diag = r.diagnostics;
  if (!include_timing) diag.erase("solver_ms");
  return {{"method", to_string(r.method)},
          {"selected", ids},
          {"selected_columns", r.selected},
          {"labels", r.labels},
          {"energy", r.energy},
          {"penalty", r.penalty},
          {"y", bits_to_string(r.y)},
          {"z", bits_to_string(r.z)},
          {"diagnostics", diag}};
}

}  // namespace rqumf
