// Shared helpers for the unit tests: random instances and brute-force oracles.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rqumf/preference.hpp"
#include "rqumf/qubo.hpp"

namespace rqumf::test_support {

inline PreferenceMatrix random_preference(std::size_t n, std::size_t m, std::uint64_t seed, double density = 0.35) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(density);
  std::vector<std::vector<int>> rows(n, std::vector<int>(m));
  for (auto& row : rows)
    for (auto& v : row) v = bit(rng);
  return PreferenceMatrix::from_rows(rows);
}

inline Bits bits_of(std::uint64_t code, std::size_t d) {
  Bits w(d);
  for (std::size_t k = 0; k < d; ++k) w[k] = static_cast<std::uint8_t>((code >> k) & 1U);
  return w;
}

/// -sum y + lambda1 sum z + lambda2 ||P z - y||^2 evaluated straight from P.
inline double rqumf_objective(const PreferenceMatrix& p, const QuboParams& params, const Bits& w) {
  const std::size_t n = p.rows(), m = p.cols();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e -= w[i];
  for (std::size_t j = 0; j < m; ++j) e += params.lambda1 * w[n + j];
  for (std::size_t i = 0; i < n; ++i) {
    double r = -static_cast<double>(w[i]);
    for (std::size_t j = 0; j < m; ++j) r += static_cast<double>(p(i, j) * w[n + j]);
    e += params.lambda2 * r * r;
  }
  return e;
}

/// Minimum energy by plain enumeration with the dense evaluator.
inline double brute_force_minimum(const QuboProblem& problem) {
  const std::size_t d = problem.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t c = 0; c < (std::uint64_t{1} << d); ++c) best = std::min(best, energy(problem, bits_of(c, d)));
  return best;
}

}  // namespace rqumf::test_support
