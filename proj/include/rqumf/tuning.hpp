// lambda1 / lambda2 search: Tree-structured Parzen Estimator with a
// random-search warm-up, plus plain random search.
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "rqumf/common.hpp"

namespace rqumf {

struct TuneSpace {
  std::pair<double, double> lambda1_range{0.01, 10.0};
  std::pair<double, double> lambda2_range{0.01, 10.0};
  bool lambda1_log = true;
  bool lambda2_log = true;

  void validate() const {
    for (const auto& [lo, hi] : {lambda1_range, lambda2_range})
      if (!(lo > 0.0) || !(lo < hi) || !std::isfinite(hi))
        throw InvalidArgument("TuneSpace: ranges must satisfy 0 < lo < hi");
  }
};

struct TuneConfig {
  std::size_t n_trials = 100;
  std::size_t n_startup = 20;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trials == 0) throw InvalidArgument("TuneConfig: n_trials must be positive");
    if (n_startup == 0 || n_startup > n_trials)
      throw InvalidArgument("TuneConfig: need 0 < n_startup <= n_trials");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("TuneConfig: gamma must lie in (0, 1)");
    if (n_candidates == 0) throw InvalidArgument("TuneConfig: n_candidates must be positive");
  }
};

struct TrialRecord {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double objective = 0.0;  // +inf when the evaluation failed
  std::uint64_t seed = 0;
  std::int64_t timestamp_ms = 0;
};

struct TuneResult {
  TrialRecord best;
  std::vector<TrialRecord> history;
};

using TuneObjective = std::function<double(double lambda1, double lambda2)>;

namespace detail {

/// One search dimension in working coordinates (log-space when flagged).
struct Axis {
  double lo, hi;
  bool log;

  double to_work(double x) const { return log ? std::log(x) : x; }
  double from_work(double u) const { return log ? std::exp(u) : u; }
  double width() const { return hi - lo; }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Mixture of Gaussians truncated to [lo, hi]: one kernel per observation
/// (Silverman bandwidth, floored at width / min(100, n + 1)) plus one
/// wide prior kernel at the range centre so the search keeps exploring.
class TruncatedKde {
 public:
  TruncatedKde(const std::vector<double>& observations, const Axis& axis) : axis_(axis) {
    const double n = static_cast<double>(observations.size());
    double bw = axis.width() / std::min(100.0, n + 1.0);
    if (observations.size() > 1) {
      double mean = 0.0;
      for (double c : observations) mean += c;
      mean /= n;
      double var = 0.0;
      for (double c : observations) var += (c - mean) * (c - mean);
      const double sd = std::sqrt(var / (n - 1.0));
      bw = std::max(bw, 1.06 * sd * std::pow(n, -0.2));
    }
    for (double c : observations) add(c, bw);
    add(0.5 * (axis.lo + axis.hi), axis.width());
  }

  double density(double u) const {
    double total = 0.0;
    for (std::size_t k = 0; k < centers_.size(); ++k) {
      const double z = (u - centers_[k]) / widths_[k];
      total += std::exp(-0.5 * z * z) / (widths_[k] * std::sqrt(2.0 * std::numbers::pi) * mass_[k]);
    }
    return total / static_cast<double>(centers_.size());
  }

  double sample(Rng& rng) const {
    const std::size_t k = uniform_index(rng, centers_.size());
    std::normal_distribution<double> normal(centers_[k], widths_[k]);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double u = normal(rng);
      if (u >= axis_.lo && u <= axis_.hi) return u;
    }
    return std::clamp(centers_[k], axis_.lo, axis_.hi);
  }

 private:
  void add(double center, double width) {
    centers_.push_back(center);
    widths_.push_back(width);
    mass_.push_back(
        std::max(normal_cdf((axis_.hi - center) / width) - normal_cdf((axis_.lo - center) / width), 1e-300));
  }

  Axis axis_;
  std::vector<double> centers_, widths_, mass_;
};

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline double safe_eval(const TuneObjective& fn, double l1, double l2) {
  try {
    const double v = fn(l1, l2);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (...) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// TPE: the first `n_startup` trials are uniform (log-uniform where flagged);
/// afterwards the history is split at the gamma-quantile into good and bad
/// sets, per-dimension truncated KDEs are fitted to both, `n_candidates`
/// points are drawn from the good density and the one maximising l(x)/g(x)
/// is evaluated next.
inline TuneResult tune(const TuneSpace& space, const TuneConfig& config, const TuneObjective& eval_fn) {
  space.validate();
  config.validate();
  const std::array<detail::Axis, 2> axes{
      detail::Axis{space.lambda1_log ? std::log(space.lambda1_range.first) : space.lambda1_range.first,
                   space.lambda1_log ? std::log(space.lambda1_range.second) : space.lambda1_range.second,
                   space.lambda1_log},
      detail::Axis{space.lambda2_log ? std::log(space.lambda2_range.first) : space.lambda2_range.first,
                   space.lambda2_log ? std::log(space.lambda2_range.second) : space.lambda2_range.second,
                   space.lambda2_log}};

  Rng rng(config.seed);
  TuneResult result;
  std::vector<std::array<double, 2>> work_points;
  for (std::size_t t = 0; t < config.n_trials; ++t) {
    std::array<double, 2> u{};
    if (t < config.n_startup) {
      for (std::size_t a = 0; a < 2; ++a) u[a] = axes[a].lo + uniform01(rng) * axes[a].width();
    } else {
      std::vector<std::size_t> order(result.history.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return result.history[a].objective < result.history[b].objective;
      });
      const auto n_good = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(config.gamma * static_cast<double>(order.size()))));
      std::vector<detail::TruncatedKde> good, bad;
      for (std::size_t a = 0; a < 2; ++a) {
        std::vector<double> g, b;
        for (std::size_t r = 0; r < order.size(); ++r) (r < n_good ? g : b).push_back(work_points[order[r]][a]);
        good.emplace_back(g, axes[a]);
        bad.emplace_back(b, axes[a]);
      }
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < config.n_candidates; ++c) {
        std::array<double, 2> cand{};
        double score = 0.0;
        for (std::size_t a = 0; a < 2; ++a) {
          cand[a] = good[a].sample(rng);
          score += std::log(std::max(good[a].density(cand[a]), 1e-300)) -
                   std::log(std::max(bad[a].density(cand[a]), 1e-300));
        }
        if (score > best_score) {
          best_score = score;
          u = cand;
        }
      }
    }
    TrialRecord rec;
    rec.lambda1 = axes[0].from_work(u[0]);
    rec.lambda2 = axes[1].from_work(u[1]);
    rec.objective = detail::safe_eval(eval_fn, rec.lambda1, rec.lambda2);
    rec.seed = config.seed;
    rec.timestamp_ms = detail::now_ms();
    work_points.push_back(u);
    result.history.push_back(rec);
  }
  result.best = *std::min_element(result.history.begin(), result.history.end(),
                                  [](const TrialRecord& a, const TrialRecord& b) { return a.objective < b.objective; });
  return result;
}

/// Best of `n_trials` uniform (log-uniform where flagged) draws; identical to
/// the warm-up phase of tune() with the same seed.
inline TuneResult random_search(const TuneSpace& space, std::size_t n_trials, const TuneObjective& eval_fn,
                                std::uint64_t seed) {
  TuneConfig config;
  config.n_trials = n_trials;
  config.n_startup = n_trials;
  config.seed = seed;
  return tune(space, config, eval_fn);
}

/// History CSV: lambda1,lambda2,objective,seed[,timestamp_ms].
inline void write_trial_history_csv(std::ostream& os, const std::vector<TrialRecord>& history,
                                    bool with_timestamp = true) {
  os.precision(17);
  os << "lambda1,lambda2,objective,seed" << (with_timestamp ? ",timestamp_ms" : "") << '\n';
  for (const auto& r : history) {
    os << r.lambda1 << ',' << r.lambda2 << ',' << r.objective << ',' << r.seed;
    if (with_timestamp) os << ',' << r.timestamp_ms;
    os << '\n';
  }
}

}  // namespace rqumf
