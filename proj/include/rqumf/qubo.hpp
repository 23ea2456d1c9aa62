// QUBO problems: E(w) = w^T Q w + s^T w + offset over binary w.
//
// Holds the generic soft-constraint folding transform and the robust
// max-coverage builder, whose variables are laid out as w = (y; z) with
// y in {0,1}^n (point covered) and z in {0,1}^m (model selected).
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"
#include "rqumf/preference.hpp"

namespace rqumf {

using Bits = std::vector<std::uint8_t>;

struct VarSplit {
  std::size_t n_points = 0;
  std::size_t m_models = 0;
  double penalty_weight = 1.0;  // lambda2
  /// Coverage structure used for penalty evaluation; kept independent of q.
  std::shared_ptr<const PreferenceMatrix> preference;
};

struct QuboProblem {
  Eigen::MatrixXd q;
  Eigen::VectorXd s;
  double offset = 0.0;
  std::optional<VarSplit> var_split;

  std::size_t size() const noexcept { return static_cast<std::size_t>(s.size()); }

  void validate() const {
    if (q.rows() != q.cols() || q.rows() != s.size()) throw DimensionMismatch("QuboProblem: inconsistent shapes");
    if (!q.allFinite() || !s.allFinite() || !std::isfinite(offset))
      throw InvalidArgument("QuboProblem: non-finite coefficient");
    const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InvalidArgument("QuboProblem: q must be symmetric");
    if (var_split && var_split->n_points + var_split->m_models != size())
      throw DimensionMismatch("QuboProblem: var_split does not match variable count");
  }
};

struct QuboParams {
  double lambda1 = 1.7;  // model-count regularizer
  double lambda2 = 0.1;  // constraint penalty weight

  void validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw InvalidArgument("QuboParams: lambda1 must be >= 0");
    if (!(lambda2 > 0.0) || !std::isfinite(lambda2)) throw InvalidArgument("QuboParams: lambda2 must be > 0");
  }
};

/// Soft constraint weight * ||a w - b||^2.
struct LinearConstraint {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  double weight = 1.0;
};

/// Folds soft linear constraints into the quadratic form:
///   Q' = Q + sum weight A^T A,  s' = s - 2 sum weight A^T b,  offset = sum weight b^T b.
inline QuboProblem fold_constraints(const Eigen::MatrixXd& q0, const Eigen::VectorXd& s0,
                                    std::span<const LinearConstraint> constraints) {
  if (q0.rows() != q0.cols() || q0.rows() != s0.size()) throw DimensionMismatch("fold_constraints: q0/s0 shape");
  QuboProblem out{q0, s0, 0.0, std::nullopt};
  for (const auto& c : constraints) {
    if (c.a.cols() != s0.size() || c.a.rows() != c.b.size())
      throw DimensionMismatch("fold_constraints: constraint shape");
    if (!(c.weight >= 0.0)) throw InvalidArgument("fold_constraints: negative weight");
    out.q.noalias() += c.weight * (c.a.transpose() * c.a);
    out.s.noalias() -= 2.0 * c.weight * (c.a.transpose() * c.b);
    out.offset += c.weight * c.b.squaredNorm();
  }
  return out;
}

/// Robust max-coverage QUBO written out block by block:
///   Q = lambda2 [[I, -P], [-P^T, P^T P]],  s = (-1_n; lambda1 1_m).
inline QuboProblem build_rqumf_qubo(const PreferenceMatrix& p, const QuboParams& params) {
  params.validate();
  const auto n = static_cast<Eigen::Index>(p.rows());
  const auto m = static_cast<Eigen::Index>(p.cols());
  Eigen::MatrixXd pm(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      pm(i, j) = p(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : 0.0;

  QuboProblem out;
  out.q = Eigen::MatrixXd::Zero(n + m, n + m);
  out.q.topLeftCorner(n, n).setIdentity();
  out.q.topRightCorner(n, m) = -pm;
  out.q.bottomLeftCorner(m, n) = -pm.transpose();
  out.q.bottomRightCorner(m, m) = pm.transpose() * pm;
  out.q *= params.lambda2;
  out.s.resize(n + m);
  out.s.head(n).setConstant(-1.0);
  out.s.tail(m).setConstant(params.lambda1);
  out.var_split = VarSplit{p.rows(), p.cols(), params.lambda2, std::make_shared<const PreferenceMatrix>(p)};
  return out;
}

/// The same problem assembled by folding the coverage constraint [-I, P] w = 0
/// into the linear objective (-1_n; lambda1 1_m).
inline QuboProblem build_rqumf_qubo_by_folding(const PreferenceMatrix& p, const QuboParams& params) {
  params.validate();
  const auto n = static_cast<Eigen::Index>(p.rows());
  const auto m = static_cast<Eigen::Index>(p.cols());
  LinearConstraint c{Eigen::MatrixXd::Zero(n, n + m), Eigen::VectorXd::Zero(n), params.lambda2};
  c.a.leftCols(n) = -Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      c.a(i, n + j) = p(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : 0.0;
  Eigen::VectorXd s0(n + m);
  s0.head(n).setConstant(-1.0);
  s0.tail(m).setConstant(params.lambda1);
  auto out = fold_constraints(Eigen::MatrixXd::Zero(n + m, n + m), s0, std::span(&c, 1));
  out.var_split = VarSplit{p.rows(), p.cols(), params.lambda2, std::make_shared<const PreferenceMatrix>(p)};
  return out;
}

inline void check_assignment(const QuboProblem& problem, std::span<const std::uint8_t> w) {
  if (w.size() != problem.size()) throw DimensionMismatch("energy: assignment length does not match problem");
  for (auto b : w)
    if (b > 1) throw InvalidArgument("energy: assignment entries must be 0 or 1");
}

/// w^T Q w + s^T w + offset, dense evaluation.
inline double energy(const QuboProblem& problem, std::span<const std::uint8_t> w) {
  check_assignment(problem, w);
  const auto d = static_cast<Eigen::Index>(w.size());
  double e = problem.offset;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!w[static_cast<std::size_t>(i)]) continue;
    e += problem.s(i);
    for (Eigen::Index j = 0; j < d; ++j)
      if (w[static_cast<std::size_t>(j)]) e += problem.q(i, j);
  }
  return e;
}

/// ||P z - y||^2 for problems built with a (y; z) split.
inline double penalty_residual(const QuboProblem& problem, std::span<const std::uint8_t> w) {
  if (!problem.var_split || !problem.var_split->preference)
    throw InvalidArgument("penalty_residual: problem has no (y, z) variable split");
  check_assignment(problem, w);
  const auto& split = *problem.var_split;
  const auto& p = *split.preference;
  double total = 0.0;
  for (std::size_t i = 0; i < split.n_points; ++i) {
    long r = -static_cast<long>(w[i]);
    for (std::size_t j = 0; j < split.m_models; ++j)
      if (w[split.n_points + j] && p(i, j)) ++r;
    total += static_cast<double>(r * r);
  }
  return total;
}

/// Linear part s^T w (the objective before the penalty is added).
inline double linear_energy(const QuboProblem& problem, std::span<const std::uint8_t> w) {
  check_assignment(problem, w);
  double e = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i]) e += problem.s(static_cast<Eigen::Index>(i));
  return e;
}

/// Compressed adjacency of a QUBO for local-move samplers. The field of
/// variable k is bias[k] + sum_j coupling(k, j) w_j and flipping k from 0 to 1
/// changes the energy by exactly that field.
class SparseQubo {
 public:
  explicit SparseQubo(const QuboProblem& problem) : offset_(problem.offset) {
    const auto d = static_cast<Eigen::Index>(problem.size());
    bias_.resize(static_cast<std::size_t>(d));
    start_.assign(static_cast<std::size_t>(d) + 1, 0);
    for (Eigen::Index i = 0; i < d; ++i) {
      bias_[static_cast<std::size_t>(i)] = problem.s(i) + problem.q(i, i);
      for (Eigen::Index j = 0; j < d; ++j) {
        if (j == i) continue;
        const double c = problem.q(i, j) + problem.q(j, i);
        if (c != 0.0) {
          neighbor_.push_back(static_cast<std::uint32_t>(j));
          coupling_.push_back(c);
        }
      }
      start_[static_cast<std::size_t>(i) + 1] = neighbor_.size();
    }
  }

  std::size_t size() const noexcept { return bias_.size(); }
  double offset() const noexcept { return offset_; }
  double bias(std::size_t k) const { return bias_[k]; }
  std::size_t degree(std::size_t k) const { return start_[k + 1] - start_[k]; }
  std::size_t edge_count() const noexcept { return neighbor_.size() / 2; }

  std::span<const std::uint32_t> neighbors(std::size_t k) const {
    return std::span(neighbor_).subspan(start_[k], degree(k));
  }
  std::span<const double> couplings(std::size_t k) const {
    return std::span(coupling_).subspan(start_[k], degree(k));
  }

  /// Energy in O(d + nnz).
  double energy(std::span<const std::uint8_t> w) const {
    double e = offset_;
    for (std::size_t k = 0; k < bias_.size(); ++k) {
      if (!w[k]) continue;
      e += bias_[k];
      const auto nb = neighbors(k);
      const auto cp = couplings(k);
      double pair = 0.0;
      for (std::size_t t = 0; t < nb.size(); ++t)
        if (nb[t] > k && w[nb[t]]) pair += cp[t];
      e += pair;
    }
    return e;
  }

  /// Local fields for assignment w.
  std::vector<double> fields(std::span<const std::uint8_t> w) const {
    std::vector<double> f(bias_);
    for (std::size_t k = 0; k < bias_.size(); ++k) {
      if (!w[k]) continue;
      const auto nb = neighbors(k);
      const auto cp = couplings(k);
      for (std::size_t t = 0; t < nb.size(); ++t) f[nb[t]] += cp[t];
    }
    return f;
  }

 private:
  double offset_;
  std::vector<double> bias_;
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> neighbor_;
  std::vector<double> coupling_;
};

// ---------------------------------------------------------------------------
// QUBO JSON: energy = sum_{i<=j} quadratic[i,j] w_i w_j + linear . w + offset,
// i.e. off-diagonal entries carry q(i,j) + q(j,i).

inline nlohmann::json qubo_to_json(const QuboProblem& problem) {
  nlohmann::json j;
  const auto d = static_cast<Eigen::Index>(problem.size());
  j["d"] = problem.size();
  if (problem.var_split)
    j["var_split"] = {{"n_points", problem.var_split->n_points}, {"m_models", problem.var_split->m_models}};
  else
    j["var_split"] = nullptr;
  j["offset"] = problem.offset;
  j["linear"] = std::vector<double>(problem.s.data(), problem.s.data() + d);
  auto quad = nlohmann::json::array();
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = r; c < d; ++c) {
      const double v = r == c ? problem.q(r, c) : problem.q(r, c) + problem.q(c, r);
      if (v != 0.0) quad.push_back({r, c, v});
    }
  j["quadratic"] = std::move(quad);
  return j;
}

/// Inverse of qubo_to_json; off-diagonal weight is split evenly across q(i,j), q(j,i).
/// The split metadata is restored without the preference structure.
inline QuboProblem qubo_from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("d").get<Eigen::Index>();
    QuboProblem out;
    out.q = Eigen::MatrixXd::Zero(d, d);
    const auto linear = j.at("linear").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(linear.size()) != d) throw ParseError("QUBO JSON: linear length != d");
    out.s = Eigen::Map<const Eigen::VectorXd>(linear.data(), d);
    out.offset = j.value("offset", 0.0);
    for (const auto& t : j.at("quadratic")) {
      const auto r = t.at(0).get<Eigen::Index>();
      const auto c = t.at(1).get<Eigen::Index>();
      const auto v = t.at(2).get<double>();
      if (r < 0 || c < r || c >= d) throw ParseError("QUBO JSON: quadratic index out of range or i > j");
      if (r == c)
        out.q(r, c) += v;
      else {
        out.q(r, c) += v / 2.0;
        out.q(c, r) += v / 2.0;
      }
    }
    if (j.contains("var_split") && !j["var_split"].is_null()) {
      VarSplit split;
      split.n_points = j["var_split"].at("n_points").get<std::size_t>();
      split.m_models = j["var_split"].at("m_models").get<std::size_t>();
      out.var_split = split;
    }
    out.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("QUBO JSON: ") + e.what());
  }
}

}  // namespace rqumf
