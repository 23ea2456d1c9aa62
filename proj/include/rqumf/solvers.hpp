// QUBO samplers: single-flip Metropolis simulated annealing, a Gray-code
// exhaustive oracle, and a command-line adapter for external backends.
#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"
#include "rqumf/qubo.hpp"

namespace rqumf {

struct Sample {
  Bits w;
  double energy = 0.0;
  std::size_t multiplicity = 1;
};

struct SampleSet {
  std::vector<Sample> samples;  // ascending energy, then lexicographic w
  std::string solver_name;
  double wall_time_ms = 0.0;

  bool empty() const noexcept { return samples.empty(); }
};

/// Merges identical states and sorts by (energy, w).
inline SampleSet make_sample_set(std::vector<Sample> raw, std::string solver_name, double wall_time_ms) {
  std::sort(raw.begin(), raw.end(), [](const Sample& a, const Sample& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return a.w < b.w;
  });
  SampleSet out{{}, std::move(solver_name), wall_time_ms};
  for (auto& s : raw) {
    if (!out.samples.empty() && out.samples.back().w == s.w)
      out.samples.back().multiplicity += s.multiplicity;
    else
      out.samples.push_back(std::move(s));
  }
  return out;
}

inline const Sample& best(const SampleSet& set) {
  if (set.samples.empty()) throw InvalidArgument("best: empty sample set");
  return set.samples.front();
}

enum class ScheduleKind { Geometric, Linear };

struct SaConfig {
  std::size_t num_samples = 100;
  std::size_t sweeps_per_sample = 1000;
  /// (beta_start, beta_end); derived from coefficient magnitudes when unset.
  std::optional<std::pair<double, double>> beta_range;
  ScheduleKind schedule_kind = ScheduleKind::Geometric;
  std::uint64_t seed = 0;
  /// Worker threads for independent chains; 0 reads RQUMF_THREADS (default 1).
  std::size_t threads = 0;

  void validate() const {
    if (num_samples == 0) throw InvalidArgument("SaConfig: num_samples must be positive");
    if (sweeps_per_sample == 0) throw InvalidArgument("SaConfig: sweeps_per_sample must be positive");
    if (beta_range) {
      const auto [b0, b1] = *beta_range;
      if (!(b0 > 0.0) || !(b1 > 0.0) || !(b0 <= b1) || !std::isfinite(b1))
        throw InvalidArgument("SaConfig: beta range must satisfy 0 < beta_start <= beta_end");
    }
  }
};

inline std::size_t thread_budget(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RQUMF_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Hot beta flips the largest possible move with probability 1/2, cold beta
/// accepts the smallest nonzero uphill move with probability 1/100.
inline std::pair<double, double> default_beta_range(const SparseQubo& qubo) {
  double max_delta = 0.0;
  double min_delta = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < qubo.size(); ++k) {
    double total = std::abs(qubo.bias(k));
    if (qubo.bias(k) != 0.0) min_delta = std::min(min_delta, std::abs(qubo.bias(k)));
    for (double c : qubo.couplings(k)) {
      total += std::abs(c);
      min_delta = std::min(min_delta, std::abs(c));
    }
    max_delta = std::max(max_delta, total);
  }
  if (!(max_delta > 0.0)) return {0.1, 1.0};
  const double hot = std::log(2.0) / max_delta;
  const double cold = std::log(100.0) / min_delta;
  return {hot, std::max(hot, cold)};
}

inline std::vector<double> beta_schedule(std::pair<double, double> range, std::size_t sweeps, ScheduleKind kind) {
  std::vector<double> betas(sweeps);
  const auto [b0, b1] = range;
  for (std::size_t t = 0; t < sweeps; ++t) {
    const double frac = sweeps == 1 ? 1.0 : static_cast<double>(t) / static_cast<double>(sweeps - 1);
    betas[t] = kind == ScheduleKind::Geometric ? b0 * std::pow(b1 / b0, frac) : b0 + (b1 - b0) * frac;
  }
  return betas;
}

namespace detail {

/// One annealing chain from a random start; returns the final state.
inline Bits anneal_chain(const SparseQubo& qubo, std::span<const double> betas, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = qubo.size();
  Bits w(d);
  for (std::size_t k = 0; k < d; ++k) w[k] = static_cast<std::uint8_t>(rng() >> 63);
  std::vector<double> field = qubo.fields(w);
  for (double beta : betas) {
    for (std::size_t k = 0; k < d; ++k) {
      const double delta = w[k] ? -field[k] : field[k];
      if (delta > 0.0 && uniform01(rng) >= std::exp(-beta * delta)) continue;
      const double sign = w[k] ? -1.0 : 1.0;
      w[k] ^= 1U;
      const auto nb = qubo.neighbors(k);
      const auto cp = qubo.couplings(k);
      for (std::size_t t = 0; t < nb.size(); ++t) field[nb[t]] += sign * cp[t];
    }
  }
  // Zero-temperature quench: the chain ends in a single-flip local minimum.
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t k = 0; k < d; ++k) {
      const double delta = w[k] ? -field[k] : field[k];
      if (!(delta < 0.0)) continue;
      const double sign = w[k] ? -1.0 : 1.0;
      w[k] ^= 1U;
      const auto nb = qubo.neighbors(k);
      const auto cp = qubo.couplings(k);
      for (std::size_t t = 0; t < nb.size(); ++t) field[nb[t]] += sign * cp[t];
      improved = true;
    }
  }
  return w;
}

}  // namespace detail

/// Runs `num_samples` independent chains. Chain c is seeded with
/// derive_seed(seed, c), so results do not depend on the thread count.
inline SampleSet solve_sa(const QuboProblem& problem, const SaConfig& config) {
  config.validate();
  if (problem.size() == 0) throw InvalidArgument("solve_sa: empty problem");
  const auto started = std::chrono::steady_clock::now();
  const SparseQubo qubo(problem);
  const auto range = config.beta_range.value_or(default_beta_range(qubo));
  const auto betas = beta_schedule(range, config.sweeps_per_sample, config.schedule_kind);

  std::vector<Sample> raw(config.num_samples);
  const auto run = [&](std::size_t chain) {
    raw[chain].w = detail::anneal_chain(qubo, betas, derive_seed(config.seed, chain));
    raw[chain].energy = qubo.energy(raw[chain].w);
  };
  const std::size_t workers = std::min(thread_budget(config.threads), config.num_samples);
  if (workers <= 1) {
    for (std::size_t c = 0; c < config.num_samples; ++c) run(c);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < config.num_samples; c += workers) run(c);
      });
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return make_sample_set(std::move(raw), "simulated_annealing", ms);
}

inline constexpr std::size_t kMaxExhaustiveVars = 25;

/// Enumerates all 2^d states in Gray-code order; returns every global minimiser.
inline SampleSet solve_exhaustive(const QuboProblem& problem) {
  const std::size_t d = problem.size();
  if (d > kMaxExhaustiveVars) throw TooLarge("solve_exhaustive: more than 25 variables");
  const auto started = std::chrono::steady_clock::now();
  const SparseQubo qubo(problem);
  Bits w(d, 0);
  std::vector<double> field = qubo.fields(w);
  double e = qubo.offset();
  double best_e = e;
  constexpr double kTieSlack = 1e-7;
  std::vector<std::uint32_t> candidates{0};
  std::uint32_t code = 0;
  const std::uint64_t total = std::uint64_t{1} << d;
  for (std::uint64_t t = 1; t < total; ++t) {
    const auto k = static_cast<std::size_t>(std::countr_zero(t));
    const double sign = w[k] ? -1.0 : 1.0;
    e += sign * field[k];
    w[k] ^= 1U;
    code ^= std::uint32_t{1} << k;
    const auto nb = qubo.neighbors(k);
    const auto cp = qubo.couplings(k);
    for (std::size_t i = 0; i < nb.size(); ++i) field[nb[i]] += sign * cp[i];
    if (e < best_e - kTieSlack) {
      best_e = e;
      candidates.assign(1, code);
    } else if (e <= best_e + kTieSlack) {
      best_e = std::min(best_e, e);
      candidates.push_back(code);
    }
  }
  // Incremental sums drift; settle ties on exactly re-evaluated energies.
  std::vector<Sample> exact;
  exact.reserve(candidates.size());
  for (auto c : candidates) {
    Bits state(d);
    for (std::size_t k = 0; k < d; ++k) state[k] = static_cast<std::uint8_t>((c >> k) & 1U);
    exact.push_back({state, energy(problem, state), 1});
  }
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& s : exact) lowest = std::min(lowest, s.energy);
  std::erase_if(exact, [&](const Sample& s) { return s.energy > lowest + 1e-9 * std::max(1.0, std::abs(lowest)); });
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return make_sample_set(std::move(exact), "exhaustive", ms);
}

// ---------------------------------------------------------------------------
// SampleSet JSON: {samples:[{w:"0101", energy, multiplicity}], solver_name, wall_time_ms}

inline std::string bits_to_string(std::span<const std::uint8_t> w) {
  std::string s(w.size(), '0');
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k]) s[k] = '1';
  return s;
}

inline Bits bits_from_string(const std::string& s) {
  Bits w(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] != '0' && s[k] != '1') throw ParseError("bit string must contain only 0 and 1");
    w[k] = s[k] == '1';
  }
  return w;
}

inline nlohmann::json sample_set_to_json(const SampleSet& set, bool include_time = true) {
  nlohmann::json j;
  auto arr = nlohmann::json::array();
  for (const auto& s : set.samples)
    arr.push_back({{"w", bits_to_string(s.w)}, {"energy", s.energy}, {"multiplicity", s.multiplicity}});
  j["samples"] = std::move(arr);
  j["solver_name"] = set.solver_name;
  if (include_time) j["wall_time_ms"] = set.wall_time_ms;
  return j;
}

/// Parses a SampleSet and re-evaluates every energy against `problem`.
inline SampleSet sample_set_from_json(const nlohmann::json& j, const QuboProblem& problem) {
  try {
    std::vector<Sample> raw;
    for (const auto& s : j.at("samples")) {
      Sample sample{bits_from_string(s.at("w").get<std::string>()), 0.0, s.value("multiplicity", std::size_t{1})};
      if (sample.w.size() != problem.size()) throw ParseError("sample set: state length does not match problem");
      sample.energy = energy(problem, sample.w);
      raw.push_back(std::move(sample));
    }
    return make_sample_set(std::move(raw), j.value("solver_name", std::string{"external"}),
                           j.value("wall_time_ms", 0.0));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sample set JSON: ") + e.what());
  }
}

/// External backend reached through a shell command. `command` may contain
/// `{qubo}` and `{out}`; the backend reads the QUBO JSON and writes a
/// SampleSet JSON. `backend` is passed through verbatim (e.g. anneal counts).
struct ExternalConfig {
  std::string command;
  std::string work_dir = ".";
  nlohmann::json backend = nlohmann::json::object();
};

inline SampleSet solve_external(const QuboProblem& problem, const ExternalConfig& config) {
  if (config.command.empty()) throw InvalidArgument("solve_external: no backend command configured");
  namespace fs = std::filesystem;
  fs::create_directories(config.work_dir);
  const auto qubo_path = (fs::path(config.work_dir) / "qubo.json").string();
  const auto out_path = (fs::path(config.work_dir) / "samples.json").string();
  {
    auto j = qubo_to_json(problem);
    j["backend"] = config.backend;
    std::ofstream os(qubo_path, std::ios::binary);
    if (!os) throw Error("solve_external: cannot write " + qubo_path);
    os << j.dump() << '\n';
  }
  std::error_code ec;
  fs::remove(out_path, ec);
  std::string cmd = config.command;
  for (const auto& [key, value] : {std::pair{std::string("{qubo}"), qubo_path}, std::pair{std::string("{out}"), out_path}})
    for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size()))
      cmd.replace(pos, key.size(), value);
  if (std::system(cmd.c_str()) != 0) throw Error("solve_external: backend command failed: " + cmd);
  std::ifstream is(out_path, std::ios::binary);
  if (!is) throw Error("solve_external: backend produced no sample set");
  try {
    return sample_set_from_json(nlohmann::json::parse(is), problem);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("sample set JSON: ") + e.what());
  }
}

enum class SolverKind { SA, Exhaustive, ExternalAdapter };

struct SolverConfig {
  SolverKind kind = SolverKind::SA;
  SaConfig sa;
  ExternalConfig external;
};

inline SampleSet solve(const QuboProblem& problem, const SolverConfig& config) {
  switch (config.kind) {
    case SolverKind::SA:
      return solve_sa(problem, config.sa);
    case SolverKind::Exhaustive:
      return solve_exhaustive(problem);
    case SolverKind::ExternalAdapter:
      return solve_external(problem, config.external);
  }
  throw InvalidArgument("solve: unknown solver kind");
}

}  // namespace rqumf
