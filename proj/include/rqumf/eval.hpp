// Misclassification error under the best one-to-one label map, plus run
// aggregation for repeated experiments.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"

namespace rqumf {

/// Kuhn-Munkres on a square cost matrix (minimisation). Returns, for each
/// row, the column assigned to it.
inline std::vector<std::size_t> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  for (const auto& row : cost)
    if (row.size() != n) throw InvalidArgument("hungarian_min: cost matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] = row matched to column j, 0 = free.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

/// Maximum-weight matching between rows and columns of a rectangular
/// non-negative weight matrix. Entry r is the matched column or -1.
inline std::vector<long> max_weight_matching(const std::vector<std::vector<double>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows ? weight.front().size() : 0;
  const std::size_t n = std::max(rows, cols);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) cost[r][c] = -weight[r][c];
  const auto assign = hungarian_min(cost);
  std::vector<long> out(rows, -1);
  for (std::size_t r = 0; r < rows; ++r)
    if (assign[r] < cols && weight[r][assign[r]] > 0.0) out[r] = static_cast<long>(assign[r]);
  return out;
}

enum class OutlierMode {
  Pinned,  // estimated 0 may only map to ground-truth 0
  Free,    // 0 is matched like any other label
};

struct EvalReport {
  double e_mis = 0.0;               // percent
  std::map<int, int> mapping;       // estimated label -> ground-truth label (-1 = unmatched)
  std::vector<std::vector<std::size_t>> confusion;  // [estimated][ground truth]
  std::size_t n_points = 0;
  std::size_t misclassified = 0;
};

namespace detail {

inline EvalReport misclassification_core(std::span<const std::vector<int>> gt_sets, std::span<const int> est,
                                         OutlierMode mode) {
  if (gt_sets.size() != est.size()) throw InvalidArgument("misclassification: label vectors differ in length");
  int max_gt = 0, max_est = 0;
  for (const auto& set : gt_sets) {
    if (set.empty()) throw InvalidArgument("misclassification: empty ground-truth label set");
    for (int g : set) {
      if (g < 0) throw InvalidArgument("misclassification: negative label");
      max_gt = std::max(max_gt, g);
    }
  }
  for (int e : est) {
    if (e < 0) throw InvalidArgument("misclassification: negative label");
    max_est = std::max(max_est, e);
  }

  EvalReport report;
  report.n_points = est.size();
  report.confusion.assign(static_cast<std::size_t>(max_est) + 1,
                          std::vector<std::size_t>(static_cast<std::size_t>(max_gt) + 1, 0));
  for (std::size_t i = 0; i < est.size(); ++i)
    for (int g : gt_sets[i]) ++report.confusion[static_cast<std::size_t>(est[i])][static_cast<std::size_t>(g)];

  const std::size_t first = mode == OutlierMode::Pinned ? 1 : 0;
  std::vector<std::vector<double>> weight;
  for (std::size_t e = first; e < report.confusion.size(); ++e) {
    weight.emplace_back();
    for (std::size_t g = first; g < report.confusion[e].size(); ++g)
      weight.back().push_back(static_cast<double>(report.confusion[e][g]));
  }
  const auto match = max_weight_matching(weight);
  if (mode == OutlierMode::Pinned) report.mapping[0] = 0;
  for (std::size_t r = 0; r < match.size(); ++r)
    report.mapping[static_cast<int>(r + first)] = match[r] < 0 ? -1 : static_cast<int>(match[r]) + static_cast<int>(first);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto it = report.mapping.find(est[i]);
    const int mapped = it == report.mapping.end() ? -1 : it->second;
    if (mapped >= 0 && std::find(gt_sets[i].begin(), gt_sets[i].end(), mapped) != gt_sets[i].end()) ++correct;
  }
  report.misclassified = est.size() - correct;
  report.e_mis = est.empty() ? 0.0 : 100.0 * static_cast<double>(report.misclassified) / static_cast<double>(est.size());
  return report;
}

}  // namespace detail

/// Percentage of points whose estimated label disagrees with the ground
/// truth under the agreement-maximising one-to-one label map.
inline EvalReport misclassification(std::span<const int> gt, std::span<const int> est,
                                    OutlierMode mode = OutlierMode::Pinned) {
  std::vector<std::vector<int>> sets;
  sets.reserve(gt.size());
  for (int g : gt) sets.push_back({g});
  return detail::misclassification_core(sets, est, mode);
}

/// Multi-label ground truth: a point is correct if its mapped label is any of its labels.
inline EvalReport misclassification_multi(std::span<const std::vector<int>> gt_sets, std::span<const int> est,
                                          OutlierMode mode = OutlierMode::Pinned) {
  return detail::misclassification_core(gt_sets, est, mode);
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json mapping = nlohmann::json::object();
  for (const auto& [e, g] : r.mapping) mapping[std::to_string(e)] = g;
  return {{"e_mis", r.e_mis},
          {"misclassified", r.misclassified},
          {"n_points", r.n_points},
          {"mapping", mapping},
          {"confusion", r.confusion}};
}

struct RunRecord {
  double e_mis = 0.0;
  std::size_t n_selected = 0;
  std::uint64_t seed = 0;
};

struct RunStats {
  std::vector<double> e_mis;
  std::vector<std::size_t> selected_counts;
  std::vector<std::uint64_t> seeds;
  double mean = 0.0;
  double median = 0.0;
  double std = std::numeric_limits<double>::quiet_NaN();  // sample std; NaN for one run
  double mean_selected = 0.0;
};

inline RunStats aggregate(std::span<const RunRecord> runs) {
  if (runs.empty()) throw InvalidArgument("aggregate: no runs");
  RunStats s;
  for (const auto& r : runs) {
    s.e_mis.push_back(r.e_mis);
    s.selected_counts.push_back(r.n_selected);
    s.seeds.push_back(r.seed);
  }
  const double n = static_cast<double>(runs.size());
  s.mean = std::accumulate(s.e_mis.begin(), s.e_mis.end(), 0.0) / n;
  auto sorted = s.e_mis;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  if (runs.size() > 1) {
    double ss = 0.0;
    for (double v : s.e_mis) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  double sel = 0.0;
  for (auto c : s.selected_counts) sel += static_cast<double>(c);
  s.mean_selected = sel / n;
  return s;
}

/// One row per run: run,seed,e_mis,n_selected.
inline void write_run_stats_csv(std::ostream& os, const RunStats& s) {
  os << "run,seed,e_mis,n_selected\n";
  for (std::size_t r = 0; r < s.e_mis.size(); ++r)
    os << r << ',' << s.seeds[r] << ',' << s.e_mis[r] << ',' << s.selected_counts[r] << '\n';
}

}  // namespace rqumf
