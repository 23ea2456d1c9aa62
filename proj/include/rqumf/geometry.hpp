// Geometric hypotheses (2D lines, 3D planes), residuals, minimal-sample
// fitting, RANSAC-style hypothesis pools and the synthetic scene generators.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rqumf/common.hpp"

namespace rqumf {

class Point {
 public:
  Point(double x, double y) : coords_{x, y, 0.0}, dim_(2) {}
  Point(double x, double y, double z) : coords_{x, y, z}, dim_(3) {}

  int dimension() const noexcept { return dim_; }
  double operator[](int axis) const { return coords_[static_cast<std::size_t>(axis)]; }
  double x() const noexcept { return coords_[0]; }
  double y() const noexcept { return coords_[1]; }
  double z() const noexcept { return coords_[2]; }

  bool finite() const noexcept {
    return std::isfinite(coords_[0]) && std::isfinite(coords_[1]) && std::isfinite(coords_[2]);
  }

  friend bool operator==(const Point&, const Point&) = default;

 private:
  std::array<double, 3> coords_;
  int dim_;
};

/// Ordered points of a single dimension, with optional ground-truth labels (0 = outlier).
class PointSet {
 public:
  PointSet() = default;

  PointSet(std::vector<Point> points, std::optional<std::vector<int>> labels = std::nullopt)
      : points_(std::move(points)), labels_(std::move(labels)) {
    dim_ = points_.empty() ? 2 : points_.front().dimension();
    for (const auto& p : points_) {
      if (p.dimension() != dim_) throw DimensionMismatch("PointSet: mixed point dimensions");
      if (!p.finite()) throw InvalidArgument("PointSet: non-finite coordinate");
    }
    if (labels_) {
      if (labels_->size() != points_.size())
        throw InvalidArgument("PointSet: label count does not match point count");
      if (std::any_of(labels_->begin(), labels_->end(), [](int l) { return l < 0; }))
        throw InvalidArgument("PointSet: labels must be non-negative");
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  int dimension() const noexcept { return dim_; }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const noexcept { return points_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return labels_.has_value(); }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::vector<Point> points_;
  std::optional<std::vector<int>> labels_;
  int dim_ = 2;
};

enum class ModelKind { Line2D, Plane3D };

constexpr int dimension_of(ModelKind kind) noexcept { return kind == ModelKind::Line2D ? 2 : 3; }
constexpr std::size_t minimal_sample_size(ModelKind kind) noexcept {
  return kind == ModelKind::Line2D ? 2 : 3;
}

/// Hessian normal form: Line2D (a,b,c) with a x + b y + c = 0, Plane3D (a,b,c,d).
/// The normal is unit length and its first nonzero component is positive.
class ModelHypothesis {
 public:
  static ModelHypothesis line(double a, double b, double c) {
    return ModelHypothesis(ModelKind::Line2D, {a, b, c, 0.0});
  }
  static ModelHypothesis plane(double a, double b, double c, double d) {
    return ModelHypothesis(ModelKind::Plane3D, {a, b, c, d});
  }

  ModelKind kind() const noexcept { return kind_; }
  int dimension() const noexcept { return dimension_of(kind_); }
  std::span<const double> params() const noexcept {
    return std::span<const double>(params_.data(), static_cast<std::size_t>(dimension() + 1));
  }

  double signed_distance(const Point& p) const {
    if (p.dimension() != dimension())
      throw DimensionMismatch("residual: point dimension does not match model");
    double acc = params_[static_cast<std::size_t>(dimension())];
    for (int k = 0; k < dimension(); ++k) acc += params_[static_cast<std::size_t>(k)] * p[k];
    return acc;
  }

  friend bool operator==(const ModelHypothesis&, const ModelHypothesis&) = default;

 private:
  ModelHypothesis(ModelKind kind, std::array<double, 4> raw) : kind_(kind), params_(raw) {
    const int dim = dimension_of(kind);
    double norm = 0.0;
    for (int k = 0; k < dim; ++k) norm += raw[static_cast<std::size_t>(k)] * raw[static_cast<std::size_t>(k)];
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw InvalidArgument("ModelHypothesis: normal must be finite and nonzero");
    double sign = 1.0;
    for (int k = 0; k < dim; ++k) {
      const double v = raw[static_cast<std::size_t>(k)] / norm;
      if (std::abs(v) > 1e-12) {
        sign = v > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (int k = 0; k <= dim; ++k) params_[static_cast<std::size_t>(k)] = sign * raw[static_cast<std::size_t>(k)] / norm;
    if (dim == 2) params_[3] = 0.0;
    if (!std::isfinite(params_[static_cast<std::size_t>(dim)]))
      throw InvalidArgument("ModelHypothesis: non-finite offset");
  }

  ModelKind kind_;
  std::array<double, 4> params_;
};

/// Orthogonal point-to-model distance.
inline double residual(const ModelHypothesis& model, const Point& point) {
  return std::abs(model.signed_distance(point));
}

/// Exact model through a minimal sample (2 points for a line, 3 for a plane).
inline ModelHypothesis fit_minimal(ModelKind kind, std::span<const Point> sample) {
  if (sample.size() != minimal_sample_size(kind))
    throw InvalidArgument("fit_minimal: wrong sample size");
  const int dim = dimension_of(kind);
  for (const auto& p : sample)
    if (p.dimension() != dim) throw DimensionMismatch("fit_minimal: point dimension does not match model");

  double scale = 1.0;
  for (const auto& p : sample)
    for (int k = 0; k < dim; ++k) scale = std::max(scale, std::abs(p[k]));

  if (kind == ModelKind::Line2D) {
    const double dx = sample[1].x() - sample[0].x();
    const double dy = sample[1].y() - sample[0].y();
    if (std::hypot(dx, dy) <= 1e-12 * scale) throw DegenerateSample("fit_minimal: coincident points");
    const double a = -dy, b = dx;
    return ModelHypothesis::line(a, b, -(a * sample[0].x() + b * sample[0].y()));
  }

  const Eigen::Vector3d p0(sample[0].x(), sample[0].y(), sample[0].z());
  const Eigen::Vector3d p1(sample[1].x(), sample[1].y(), sample[1].z());
  const Eigen::Vector3d p2(sample[2].x(), sample[2].y(), sample[2].z());
  const Eigen::Vector3d e1 = p1 - p0, e2 = p2 - p0;
  const Eigen::Vector3d normal = e1.cross(e2);
  if (normal.norm() <= 1e-12 * std::max(1.0, e1.norm() * e2.norm()) || e1.norm() <= 1e-12 * scale ||
      e2.norm() <= 1e-12 * scale)
    throw DegenerateSample("fit_minimal: coincident or collinear points");
  return ModelHypothesis::plane(normal.x(), normal.y(), normal.z(), -normal.dot(p0));
}

/// Total-least-squares fit to two or more points.
inline ModelHypothesis fit_least_squares(ModelKind kind, std::span<const Point> pts) {
  const int dim = dimension_of(kind);
  if (pts.size() < minimal_sample_size(kind)) throw InvalidArgument("fit_least_squares: too few points");
  Eigen::MatrixXd data(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].dimension() != dim) throw DimensionMismatch("fit_least_squares: dimension mismatch");
    for (int k = 0; k < dim; ++k) data(static_cast<Eigen::Index>(i), k) = pts[i][k];
  }
  const Eigen::RowVectorXd centroid = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - centroid;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
  const Eigen::VectorXd normal = eig.eigenvectors().col(0);
  // Second-smallest eigenvalue ~ 0 means the points do not span a line / plane.
  if (eig.eigenvalues()(1) <= 1e-24 * std::max(1.0, eig.eigenvalues()(dim - 1)))
    throw DegenerateSample("fit_least_squares: points do not determine a unique model");
  const double offset = -normal.dot(centroid.transpose());
  if (kind == ModelKind::Line2D) return ModelHypothesis::line(normal(0), normal(1), offset);
  return ModelHypothesis::plane(normal(0), normal(1), normal(2), offset);
}

struct BoundingBox {
  std::array<double, 3> lo{-1.0, -1.0, -1.0};
  std::array<double, 3> hi{1.0, 1.0, 1.0};
};

struct SyntheticConfig {
  std::size_t total_points = 30;
  double outlier_fraction = 1.0 / 6.0;
  double noise_sigma = 0.01;
  std::size_t n_structures = 5;
  BoundingBox bounding_box{};
  std::uint64_t seed = 0;

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::llround(outlier_fraction * static_cast<double>(total_points)));
  }
  std::size_t inlier_count() const { return total_points - outlier_count(); }

  void validate() const {
    if (total_points == 0) throw InvalidArgument("SyntheticConfig: total_points must be positive");
    if (!(outlier_fraction >= 0.0 && outlier_fraction <= 0.5))
      throw InvalidArgument("SyntheticConfig: outlier_fraction must lie in [0, 0.5]");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw InvalidArgument("SyntheticConfig: noise_sigma must be non-negative");
    if (n_structures == 0) throw InvalidArgument("SyntheticConfig: n_structures must be positive");
    for (std::size_t k = 0; k < 3; ++k)
      if (!(bounding_box.lo[k] < bounding_box.hi[k]))
        throw InvalidArgument("SyntheticConfig: empty bounding box");
  }
};

struct SyntheticScene {
  PointSet points;
  std::vector<ModelHypothesis> models;  // ground truth, structure k has label k+1
};

namespace detail {

inline std::vector<std::size_t> split_evenly(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> counts(parts, total / parts);
  for (std::size_t k = 0; k < total % parts; ++k) ++counts[k];
  return counts;
}

}  // namespace detail

/// Points on the edges of a regular polygon (a pentagon by default) inscribed in
/// the unit circle, with Gaussian noise along each edge normal, plus outliers
/// uniform in the bounding box. Positions along an edge are stratified
/// uniform, so inliers spread over the whole edge. Labels: structure index + 1,
/// outliers 0.
inline SyntheticScene generate_pentagon(const SyntheticConfig& config) {
  config.validate();
  if (config.n_structures < 3) throw InvalidArgument("generate_pentagon: need at least 3 edges");
  const std::size_t k_edges = config.n_structures;
  std::vector<std::array<double, 2>> vertices(k_edges);
  for (std::size_t k = 0; k < k_edges; ++k) {
    const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * static_cast<double>(k) /
                                                      static_cast<double>(k_edges);
    vertices[k] = {std::cos(angle), std::sin(angle)};
  }

  std::vector<ModelHypothesis> models;
  for (std::size_t k = 0; k < k_edges; ++k) {
    const auto& a = vertices[k];
    const auto& b = vertices[(k + 1) % k_edges];
    const std::array<Point, 2> ends{Point(a[0], a[1]), Point(b[0], b[1])};
    models.push_back(fit_minimal(ModelKind::Line2D, ends));
  }

  Rng rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Point> pts;
  std::vector<int> labels;
  pts.reserve(config.total_points);
  const auto per_edge = detail::split_evenly(config.inlier_count(), k_edges);
  for (std::size_t k = 0; k < k_edges; ++k) {
    const auto& a = vertices[k];
    const auto& b = vertices[(k + 1) % k_edges];
    const auto normal = models[k].params();
    for (std::size_t i = 0; i < per_edge[k]; ++i) {
      // Stratified: point i is uniform on the i-th of per_edge[k] equal slices.
      const double t = (static_cast<double>(i) + uniform01(rng)) / static_cast<double>(per_edge[k]);
      const double offset = config.noise_sigma * noise(rng);
      pts.emplace_back(a[0] + t * (b[0] - a[0]) + offset * normal[0], a[1] + t * (b[1] - a[1]) + offset * normal[1]);
      labels.push_back(static_cast<int>(k + 1));
    }
  }
  const auto& box = config.bounding_box;
  for (std::size_t i = 0; i < config.outlier_count(); ++i) {
    const double x = box.lo[0] + uniform01(rng) * (box.hi[0] - box.lo[0]);
    const double y = box.lo[1] + uniform01(rng) * (box.hi[1] - box.lo[1]);
    pts.emplace_back(x, y);
    labels.push_back(0);
  }
  return {PointSet(std::move(pts), std::move(labels)), std::move(models)};
}

/// Points on faces of the axis-aligned cube [0, side]^3 (faces x=0, y=0, z=0,
/// x=side, y=side, z=side in that order; up to six structures) with Gaussian
/// noise along the face normal, plus outliers uniform in the bounding box.
inline SyntheticScene generate_cube_faces(const SyntheticConfig& config, double side = 10.0) {
  config.validate();
  if (config.n_structures > 6) throw InvalidArgument("generate_cube_faces: at most 6 faces");
  if (!(side > 0.0)) throw InvalidArgument("generate_cube_faces: side must be positive");
  Rng rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Point> pts;
  std::vector<int> labels;
  std::vector<ModelHypothesis> models;
  const auto per_face = detail::split_evenly(config.inlier_count(), config.n_structures);
  for (std::size_t f = 0; f < config.n_structures; ++f) {
    const std::size_t axis = f % 3;
    const double level = f < 3 ? 0.0 : side;
    std::array<double, 3> n{0.0, 0.0, 0.0};
    n[axis] = 1.0;
    models.push_back(ModelHypothesis::plane(n[0], n[1], n[2], -level));
    for (std::size_t i = 0; i < per_face[f]; ++i) {
      std::array<double, 3> c{};
      for (std::size_t k = 0; k < 3; ++k) c[k] = uniform01(rng) * side;
      c[axis] = level + config.noise_sigma * noise(rng);
      pts.emplace_back(c[0], c[1], c[2]);
      labels.push_back(static_cast<int>(f + 1));
    }
  }
  const auto& box = config.bounding_box;
  for (std::size_t i = 0; i < config.outlier_count(); ++i) {
    std::array<double, 3> c{};
    for (std::size_t k = 0; k < 3; ++k) c[k] = box.lo[k] + uniform01(rng) * (box.hi[k] - box.lo[k]);
    pts.emplace_back(c[0], c[1], c[2]);
    labels.push_back(0);
  }
  return {PointSet(std::move(pts), std::move(labels)), std::move(models)};
}

struct SamplingOptions {
  /// When set, the 2nd..k-th sample points are drawn with probability
  /// proportional to exp(-d^2 / sigma^2) from the first drawn point.
  std::optional<double> locality_sigma;
};

/// Draws `m` hypotheses, each fitted from a uniformly drawn minimal sample.
/// Degenerate draws are redrawn; at most 100*m redraws in total.
inline std::vector<ModelHypothesis> sample_hypotheses(const PointSet& points, ModelKind kind, std::size_t m,
                                                      std::uint64_t seed, const SamplingOptions& options = {}) {
  if (m == 0) throw InvalidArgument("sample_hypotheses: m must be positive");
  if (points.dimension() != dimension_of(kind))
    throw DimensionMismatch("sample_hypotheses: point dimension does not match model kind");
  const std::size_t k = minimal_sample_size(kind);
  if (points.size() < k) throw SamplingFailed("sample_hypotheses: fewer points than a minimal sample");
  if (options.locality_sigma && !(*options.locality_sigma > 0.0))
    throw InvalidArgument("sample_hypotheses: locality sigma must be positive");

  Rng rng(seed);
  const std::size_t n = points.size();
  std::vector<double> weights(n);
  std::vector<std::size_t> idx;
  std::vector<Point> sample;
  std::vector<ModelHypothesis> out;
  out.reserve(m);
  std::size_t redraws = 0;
  const std::size_t budget = 100 * m;

  while (out.size() < m) {
    idx.clear();
    idx.push_back(uniform_index(rng, n));
    while (idx.size() < k) {
      std::size_t next;
      if (options.locality_sigma) {
        const Point& anchor = points[idx.front()];
        const double s2 = *options.locality_sigma * *options.locality_sigma;
        for (std::size_t i = 0; i < n; ++i) {
          double d2 = 0.0;
          for (int a = 0; a < points.dimension(); ++a) d2 += (points[i][a] - anchor[a]) * (points[i][a] - anchor[a]);
          weights[i] = std::find(idx.begin(), idx.end(), i) != idx.end() ? 0.0 : std::exp(-d2 / s2);
        }
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) {
          next = uniform_index(rng, n);
        } else {
          double u = uniform01(rng) * total;
          next = n - 1;
          for (std::size_t i = 0; i < n; ++i) {
            u -= weights[i];
            if (u < 0.0) {
              next = i;
              break;
            }
          }
        }
      } else {
        next = uniform_index(rng, n);
      }
      if (std::find(idx.begin(), idx.end(), next) == idx.end()) idx.push_back(next);
    }
    sample.clear();
    for (std::size_t i : idx) sample.push_back(points[i]);
    try {
      out.push_back(fit_minimal(kind, sample));
    } catch (const DegenerateSample&) {
      if (++redraws > budget) throw SamplingFailed("sample_hypotheses: retry budget exhausted");
    }
  }
  return out;
}

/// One least-squares model per ground-truth structure (labels 1..K, in order).
inline std::vector<ModelHypothesis> refit_ground_truth(const PointSet& points, ModelKind kind) {
  if (!points.has_labels()) throw InvalidArgument("refit_ground_truth: point set has no labels");
  const auto& labels = *points.labels();
  const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  std::vector<ModelHypothesis> models;
  for (int l = 1; l <= max_label; ++l) {
    std::vector<Point> group;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (labels[i] == l) group.push_back(points[i]);
    if (group.empty()) continue;
    models.push_back(fit_least_squares(kind, group));
  }
  return models;
}

/// Ground-truth refits followed by m - K random hypotheses.
inline std::vector<ModelHypothesis> sample_with_ground_truth(const PointSet& points, ModelKind kind, std::size_t m,
                                                             std::uint64_t seed,
                                                             const SamplingOptions& options = {}) {
  auto models = refit_ground_truth(points, kind);
  if (m < models.size()) throw InvalidArgument("sample_with_ground_truth: m smaller than structure count");
  if (m > models.size()) {
    auto rest = sample_hypotheses(points, kind, m - models.size(), seed, options);
    models.insert(models.end(), rest.begin(), rest.end());
  }
  return models;
}

// ---------------------------------------------------------------------------
// PointSet CSV: header `x,y[,z][,label]`, one row per point.

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void write_points_csv(std::ostream& os, const PointSet& points) {
  os << (points.dimension() == 3 ? "x,y,z" : "x,y");
  if (points.has_labels()) os << ",label";
  os << '\n';
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int a = 0; a < points.dimension(); ++a) os << (a ? "," : "") << format_double(points[i][a]);
    if (points.has_labels()) os << ',' << (*points.labels())[i];
    os << '\n';
  }
}

inline void save_points_csv(const std::string& path, const PointSet& points) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  write_points_csv(os, points);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, std::size_t row, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw ParseError("invalid number '" + s + "'", row, col);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("invalid number '" + s + "'", row, col);
  }
}

}  // namespace detail

inline PointSet read_points_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("point CSV: empty input");
  const auto header = detail::split_csv_line(line);
  const bool has_label = !header.empty() && header.back() == "label";
  const std::size_t dims = header.size() - (has_label ? 1 : 0);
  const std::vector<std::string> expect2{"x", "y"}, expect3{"x", "y", "z"};
  const std::vector<std::string> coords(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(dims));
  if (coords != expect2 && coords != expect3) throw ParseError("point CSV: header must be x,y[,z][,label]", 1);

  std::vector<Point> pts;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("point CSV: wrong number of fields", row);
    const double x = detail::parse_double(cells[0], row, 1);
    const double y = detail::parse_double(cells[1], row, 2);
    if (dims == 3)
      pts.emplace_back(x, y, detail::parse_double(cells[2], row, 3));
    else
      pts.emplace_back(x, y);
    if (has_label) {
      const double l = detail::parse_double(cells[dims], row, dims + 1);
      if (l < 0 || l != std::floor(l)) throw ParseError("point CSV: label must be a non-negative integer", row, dims + 1);
      labels.push_back(static_cast<int>(l));
    }
  }
  if (pts.empty()) throw ParseError("point CSV: no points");
  if (has_label) return PointSet(std::move(pts), std::move(labels));
  return PointSet(std::move(pts));
}

inline PointSet load_points_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  return read_points_csv(is);
}

}  // namespace rqumf
