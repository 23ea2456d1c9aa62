// Binary preference-consensus matrix: rows are points, columns are hypotheses,
// P(i, j) = 1 iff point i is an inlier of hypothesis j.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rqumf/common.hpp"
#include "rqumf/geometry.hpp"

namespace rqumf {

class PreferenceMatrix {
 public:
  PreferenceMatrix() = default;

  /// All-zero n x m matrix with column ids 0..m-1.
  PreferenceMatrix(std::size_t n, std::size_t m) : n_(n), m_(m), data_(n * m, 0), ids_(m) {
    std::iota(ids_.begin(), ids_.end(), std::size_t{0});
  }

  PreferenceMatrix(std::size_t n, std::size_t m, std::vector<std::uint8_t> row_major,
                   std::vector<std::size_t> column_ids)
      : n_(n), m_(m), data_(std::move(row_major)), ids_(std::move(column_ids)) {
    if (data_.size() != n * m) throw InvalidArgument("PreferenceMatrix: data size is not n*m");
    if (ids_.size() != m) throw InvalidArgument("PreferenceMatrix: need one id per column");
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; }))
      throw InvalidArgument("PreferenceMatrix: entries must be 0 or 1");
    auto sorted = ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw InvalidArgument("PreferenceMatrix: column ids must be distinct");
  }

  static PreferenceMatrix from_rows(const std::vector<std::vector<int>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.front().size() : 0;
    std::vector<std::uint8_t> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
      if (r.size() != m) throw InvalidArgument("PreferenceMatrix: ragged rows");
      for (int v : r) {
        if (v != 0 && v != 1) throw InvalidArgument("PreferenceMatrix: entries must be 0 or 1");
        data.push_back(static_cast<std::uint8_t>(v));
      }
    }
    std::vector<std::size_t> ids(m);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    return PreferenceMatrix(n, m, std::move(data), std::move(ids));
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return m_; }
  bool operator()(std::size_t i, std::size_t j) const { return data_[i * m_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { data_[i * m_ + j] = v ? 1 : 0; }
  const std::vector<std::size_t>& column_ids() const noexcept { return ids_; }
  std::span<const std::uint8_t> row_major() const noexcept { return data_; }

  /// Consensus set of column j: indices of points with P(i, j) = 1.
  std::vector<std::size_t> column_support(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i)
      if (data_[i * m_ + j]) out.push_back(i);
    return out;
  }

  std::vector<std::vector<std::size_t>> column_supports() const {
    std::vector<std::vector<std::size_t>> out(m_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j)
        if (data_[i * m_ + j]) out[j].push_back(i);
    return out;
  }

  /// Columns `keep` in the given order; ids travel with their columns.
  PreferenceMatrix select_columns(std::span<const std::size_t> keep) const {
    std::vector<std::uint8_t> data(n_ * keep.size());
    std::vector<std::size_t> ids;
    ids.reserve(keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c) {
      if (keep[c] >= m_) throw InvalidArgument("select_columns: column out of range");
      ids.push_back(ids_[keep[c]]);
      for (std::size_t i = 0; i < n_; ++i) data[i * keep.size() + c] = data_[i * m_ + keep[c]];
    }
    return PreferenceMatrix(n_, keep.size(), std::move(data), std::move(ids));
  }

  std::size_t count_ones() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const PreferenceMatrix&, const PreferenceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::uint8_t> data_;
  std::vector<std::size_t> ids_;
};

struct ConsensusConfig {
  double epsilon = 0.03;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw InvalidArgument("ConsensusConfig: epsilon must be positive");
  }
};

/// P(i, j) = 1 iff residual(models[j], points[i]) < epsilon (strict).
inline PreferenceMatrix build_preference(const PointSet& points, std::span<const ModelHypothesis> models,
                                         const ConsensusConfig& config) {
  config.validate();
  if (models.empty()) throw InvalidArgument("build_preference: no models");
  for (const auto& model : models)
    if (model.dimension() != points.dimension())
      throw DimensionMismatch("build_preference: model and point dimensions differ");
  PreferenceMatrix p(points.size(), models.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < models.size(); ++j)
      if (residual(models[j], points[i]) < config.epsilon) p.set(i, j, true);
  return p;
}

/// Consensus-set sizes (column sums).
inline std::vector<std::size_t> column_stats(const PreferenceMatrix& p) {
  std::vector<std::size_t> out(p.cols(), 0);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) out[j] += p(i, j);
  return out;
}

/// Preference-set sizes (row sums).
inline std::vector<std::size_t> row_stats(const PreferenceMatrix& p) {
  std::vector<std::size_t> out(p.rows(), 0);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) out[i] += p(i, j);
  return out;
}

struct ColumnReduction {
  PreferenceMatrix matrix;
  std::vector<std::size_t> kept;  // original column index of each kept column
};

/// Collapses identical columns, keeping the lowest index of each group.
inline ColumnReduction dedup_columns(const PreferenceMatrix& p) {
  std::map<std::vector<std::size_t>, std::size_t> seen;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < p.cols(); ++j)
    if (seen.emplace(p.column_support(j), j).second) kept.push_back(j);
  return {p.select_columns(kept), kept};
}

/// Drops columns with empty consensus.
inline ColumnReduction prune_empty_columns(const PreferenceMatrix& p) {
  const auto sizes = column_stats(p);
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < p.cols(); ++j)
    if (sizes[j] > 0) kept.push_back(j);
  return {p.select_columns(kept), kept};
}

// ---------------------------------------------------------------------------
// Interchange: headerless CSV of 0/1, n rows x m columns. Column ids and epsilon
// live in an optional JSON sidecar.

inline void write_preference_csv(std::ostream& os, const PreferenceMatrix& p) {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = 0; j < p.cols(); ++j) {
      if (j) os << ',';
      os << (p(i, j) ? '1' : '0');
    }
    os << '\n';
  }
}

inline PreferenceMatrix read_preference_csv(std::istream& is) {
  std::vector<std::uint8_t> data;
  std::size_t n = 0, m = 0;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (n == 0) {
      m = cells.size();
    } else if (cells.size() != m) {
      throw ParseError("preference CSV: ragged row, expected " + std::to_string(m) + " fields", row,
                       std::min(cells.size(), m) + 1);
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] == "0")
        data.push_back(0);
      else if (cells[c] == "1")
        data.push_back(1);
      else
        throw ParseError("preference CSV: entry must be 0 or 1, got '" + cells[c] + "'", row, c + 1);
    }
    ++n;
  }
  if (n == 0 || m == 0) throw ParseError("preference CSV: empty input");
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return PreferenceMatrix(n, m, std::move(data), std::move(ids));
}

inline void save_preference(const PreferenceMatrix& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  write_preference_csv(os, p);
}

inline PreferenceMatrix load_preference(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  return read_preference_csv(is);
}

struct PreferenceSidecar {
  double epsilon = 0.0;
  std::vector<std::size_t> column_ids;
  std::string provenance;
};

inline nlohmann::json sidecar_to_json(const PreferenceSidecar& s) {
  return {{"epsilon", s.epsilon}, {"column_ids", s.column_ids}, {"provenance", s.provenance}};
}

inline void save_sidecar(const PreferenceSidecar& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os << sidecar_to_json(s).dump(2) << '\n';
}

inline PreferenceSidecar load_sidecar(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  try {
    const auto j = nlohmann::json::parse(is);
    PreferenceSidecar s;
    s.epsilon = j.value("epsilon", 0.0);
    s.column_ids = j.value("column_ids", std::vector<std::size_t>{});
    s.provenance = j.value("provenance", std::string{});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("preference sidecar: ") + e.what());
  }
}

/// Loads a preference CSV and, if present, applies the `<path>.json` sidecar's column ids.
inline PreferenceMatrix load_preference_with_sidecar(const std::string& path, PreferenceSidecar* sidecar_out = nullptr) {
  auto p = load_preference(path);
  std::ifstream probe(path + ".json");
  if (!probe) return p;
  auto sidecar = load_sidecar(path + ".json");
  if (!sidecar.column_ids.empty()) {
    if (sidecar.column_ids.size() != p.cols()) throw ParseError("preference sidecar: column_ids length mismatch");
    std::vector<std::uint8_t> data(p.row_major().begin(), p.row_major().end());
    p = PreferenceMatrix(p.rows(), p.cols(), std::move(data), sidecar.column_ids);
  }
  if (sidecar_out) *sidecar_out = std::move(sidecar);
  return p;
}

}  // namespace rqumf
