#ifndef TOMALIGN_GEOMETRY_HPP
#define TOMALIGN_GEOMETRY_HPP

// Numerical core: score vectors, expectation matrices, covariance-weighted
// polygon graphs and the area/distance/loss metrics compared between an
// editor's expectation graph and the graph of freshly judged content.
//
// Scores live on the unit scale ([0,1], judge scale / 100). Vertex magnitudes
// are floored at kAreaEpsilon only when an area is computed, so an ideal
// score of 0 does not collapse every determinant.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"

namespace tomalign {

inline constexpr double kAreaEpsilon = 0.01;
inline constexpr double kConvergenceThreshold = 0.05;
inline constexpr double kMaxRawScore = 100.0;

// ---------------------------------------------------------------------------
// Dimensions of judgement
// ---------------------------------------------------------------------------

enum class Polarity { direct, inverted };

NLOHMANN_JSON_SERIALIZE_ENUM(Polarity, {
                                           {Polarity::direct, "direct"},
                                           {Polarity::inverted, "inverted"},
                                       })

struct DimensionSpec {
  std::size_t id = 0;
  std::string name;
  std::string definition;
  double ideal_score = 0.0;
  /// inverted: a lower raw score is better (e.g. repetitiveness).
  Polarity polarity = Polarity::direct;
  /// Name quoted in editor feedback; empty means `name`.
  std::string display_name;

  /// snake_case of `name`; the judge JSON field for this dimension.
  std::string key() const {
    std::string out;
    bool pending_sep = false;
    for (unsigned char ch : name) {
      if (std::isalnum(ch)) {
        if (pending_sep && !out.empty()) out.push_back('_');
        pending_sep = false;
        out.push_back(static_cast<char>(std::tolower(ch)));
      } else if (ch == ' ' || ch == '-' || ch == '_') {
        pending_sep = true;
      }
    }
    return out;
  }

  std::string label() const { return display_name.empty() ? name : display_name; }

  std::string lower_name() const {
    std::string out = name;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  }

  friend bool operator==(const DimensionSpec&, const DimensionSpec&) = default;
};

inline void to_json(nlohmann::json& j, const DimensionSpec& d) {
  j = {{"id", d.id},
       {"name", d.name},
       {"definition", d.definition},
       {"ideal_score", d.ideal_score},
       {"polarity", d.polarity},
       {"display_name", d.display_name}};
}

inline void from_json(const nlohmann::json& j, DimensionSpec& d) {
  j.at("id").get_to(d.id);
  j.at("name").get_to(d.name);
  d.definition = j.value("definition", std::string{});
  j.at("ideal_score").get_to(d.ideal_score);
  d.polarity = j.value("polarity", Polarity::direct);
  d.display_name = j.value("display_name", std::string{});
}

/// Ids must be 0..n-1 in order, keys unique, ideals within [0,100].
inline void validate_dimensions(std::span<const DimensionSpec> dims) {
  if (dims.empty()) throw EmptyInput("at least one dimension is required");
  std::set<std::string> keys;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    const auto& d = dims[n];
    if (d.id != n) {
      throw ValidationError("dimension ids must be contiguous from 0; '" + d.name +
                            "' has id " + std::to_string(d.id));
    }
    if (d.key().empty()) throw ValidationError("dimension " + std::to_string(n) + " has no name");
    if (!keys.insert(d.key()).second) {
      throw ValidationError("duplicate dimension name '" + d.name + "'");
    }
    if (!(d.ideal_score >= 0.0 && d.ideal_score <= kMaxRawScore)) {
      throw RangeError("ideal score of '" + d.name + "' must lie in [0,100]");
    }
  }
}

/// Factualness, Novelty, Repetitiveness and Topic Alignment with their
/// un-personalized ideal scores (100, 50, 0, 100).
inline std::vector<DimensionSpec> default_dimensions() {
  return {
      {0, "Factualness",
       "Every number, name and pronoun agrees with the supplied context; each factual error "
       "costs points.",
       100.0, Polarity::direct, ""},
      {1, "Novelty",
       "How much fresh phrasing, structure or added context the text brings beyond a restatement "
       "of the facts.",
       50.0, Polarity::direct, ""},
      {2, "Repetitiveness",
       "How often the text returns to the same statistic or point. Zero means each statistic "
       "appears exactly once.",
       0.0, Polarity::inverted, "Repetitive"},
      {3, "Topic Alignment",
       "How directly every sentence relates to the match and its players.", 100.0,
       Polarity::direct, ""},
  };
}

inline std::vector<double> ideal_scores(std::span<const DimensionSpec> dims) {
  std::vector<double> out;
  out.reserve(dims.size());
  for (const auto& d : dims) out.push_back(d.ideal_score);
  return out;
}

// ---------------------------------------------------------------------------
// Score containers
// ---------------------------------------------------------------------------

/// Per-dimension judge confidences on the unit scale.
class ScoreVector {
 public:
  ScoreVector() = default;

  explicit ScoreVector(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t n = 0; n < values_.size(); ++n) {
      if (!(values_[n] >= 0.0 && values_[n] <= 1.0)) {
        throw RangeError("unit score for dimension " + std::to_string(n) + " is " +
                         std::to_string(values_[n]) + ", expected [0,1]");
      }
    }
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t n) const { return values_.at(n); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  std::vector<double> values_;
};

inline void to_json(nlohmann::json& j, const ScoreVector& s) { j = s.values(); }
inline void from_json(const nlohmann::json& j, ScoreVector& s) {
  s = ScoreVector(j.get<std::vector<double>>());
}

/// Converts judge scores on the 0-100 scale to the unit scale.
/// `dims`, when given, is only used to name the offending dimension.
inline ScoreVector normalize_scores(std::span<const double> raw,
                                    std::span<const DimensionSpec> dims = {}) {
  std::vector<double> unit;
  unit.reserve(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n) {
    if (!(raw[n] >= 0.0 && raw[n] <= kMaxRawScore)) {
      std::string label = "dimension " + std::to_string(n);
      if (n < dims.size()) label += " (" + dims[n].name + ")";
      throw RangeError(label + " has score " + std::to_string(raw[n]) +
                       ", expected [0,100]");
    }
    unit.push_back(raw[n] / kMaxRawScore);
  }
  return ScoreVector(std::move(unit));
}

/// m judged samples, one ScoreVector per row.
class SampleMatrix {
 public:
  SampleMatrix() = default;

  explicit SampleMatrix(std::vector<ScoreVector> rows) {
    for (auto& r : rows) append(std::move(r));
  }

  void append(ScoreVector row) {
    if (!rows_.empty() && row.size() != cols()) {
      throw ShapeError("sample row has " + std::to_string(row.size()) + " values, expected " +
                       std::to_string(cols()));
    }
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  std::size_t cols() const noexcept { return rows_.empty() ? 0 : rows_.front().size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const ScoreVector& row(std::size_t r) const { return rows_.at(r); }
  const std::vector<ScoreVector>& row_vectors() const noexcept { return rows_; }
  double at(std::size_t r, std::size_t c) const { return rows_.at(r)[c]; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r[c]);
    return out;
  }

  friend bool operator==(const SampleMatrix&, const SampleMatrix&) = default;

 private:
  std::vector<ScoreVector> rows_;
};

inline void to_json(nlohmann::json& j, const SampleMatrix& m) { j = {{"rows", m.row_vectors()}}; }
inline void from_json(const nlohmann::json& j, SampleMatrix& m) {
  m = SampleMatrix(j.at("rows").get<std::vector<ScoreVector>>());
}

namespace detail {

// Sums in ascending order so the result does not depend on input order;
// profile targets and covariances must be identical under permutation.
inline double order_invariant_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

inline double mean(std::vector<double> values) {
  const auto n = static_cast<double>(values.size());
  return order_invariant_sum(std::move(values)) / n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Dense row-major square matrix; only what the metrics need.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t order, double fill = 0.0)
      : order_(order), data_(order * order, fill) {}

  std::size_t order() const noexcept { return order_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * order_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * order_ + c]; }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(order_);
    for (std::size_t r = 0; r < order_; ++r) {
      out[r].assign(data_.begin() + static_cast<std::ptrdiff_t>(r * order_),
                    data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * order_));
    }
    return out;
  }

  static SquareMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    SquareMatrix m(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ShapeError("matrix is not square");
      for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t order_ = 0;
  std::vector<double> data_;
};

/// Gaussian elimination with partial pivoting.
inline double determinant(SquareMatrix m) {
  const std::size_t n = m.order();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    }
    if (m(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(pivot, c), m(col, c));
      det = -det;
    }
    det *= m(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = m(r, col) / m(col, col);
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= factor * m(col, c);
    }
  }
  return det;
}

/// Diagonal of column means; every off-diagonal entry is zero.
struct ExpectationMatrix {
  std::vector<double> diagonal;

  std::size_t size() const noexcept { return diagonal.size(); }
  double at(std::size_t i, std::size_t j) const { return i == j ? diagonal.at(i) : 0.0; }

  SquareMatrix dense() const {
    SquareMatrix m(diagonal.size());
    for (std::size_t n = 0; n < diagonal.size(); ++n) m(n, n) = diagonal[n];
    return m;
  }

  friend bool operator==(const ExpectationMatrix&, const ExpectationMatrix&) = default;
};

inline void to_json(nlohmann::json& j, const ExpectationMatrix& e) {
  j = {{"diagonal", e.diagonal}};
}
inline void from_json(const nlohmann::json& j, ExpectationMatrix& e) {
  j.at("diagonal").get_to(e.diagonal);
}

inline ExpectationMatrix build_expectation(const SampleMatrix& samples) {
  if (samples.empty()) throw EmptyInput("expectation needs at least one sample row");
  ExpectationMatrix e;
  e.diagonal.reserve(samples.cols());
  for (std::size_t c = 0; c < samples.cols(); ++c) {
    e.diagonal.push_back(detail::mean(samples.column(c)));
  }
  return e;
}

/// Entry (i,j) = clamp(1 - |popcov(d_i, d_j)|, 0, 1).
struct ScaledCovariance {
  SquareMatrix entries;

  std::size_t size() const noexcept { return entries.order(); }
  double at(std::size_t i, std::size_t j) const { return entries(i, j); }

  static ScaledCovariance ones(std::size_t n) { return {SquareMatrix(n, 1.0)}; }

  friend bool operator==(const ScaledCovariance&, const ScaledCovariance&) = default;
};

inline void to_json(nlohmann::json& j, const ScaledCovariance& s) {
  j = {{"entries", s.entries.rows()}};
}
inline void from_json(const nlohmann::json& j, ScaledCovariance& s) {
  s.entries = SquareMatrix::from_rows(j.at("entries").get<std::vector<std::vector<double>>>());
}

/// Population covariance of two equally long columns; 0 for a single row.
inline double population_covariance(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("covariance columns differ in length");
  if (x.empty()) throw EmptyInput("covariance of empty columns");
  const double mx = detail::mean(x);
  const double my = detail::mean(y);
  std::vector<double> products;
  products.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) products.push_back((x[i] - mx) * (y[i] - my));
  return detail::order_invariant_sum(std::move(products)) / static_cast<double>(x.size());
}

inline ScaledCovariance scaled_covariance(const SampleMatrix& samples) {
  if (samples.empty()) throw EmptyInput("covariance needs at least one sample row");
  const std::size_t n = samples.cols();
  std::vector<std::vector<double>> columns;
  columns.reserve(n);
  for (std::size_t c = 0; c < n; ++c) columns.push_back(samples.column(c));

  ScaledCovariance scov{SquareMatrix(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double w = std::clamp(1.0 - std::abs(population_covariance(columns[i], columns[j])),
                                  0.0, 1.0);
      scov.entries(i, j) = w;
      scov.entries(j, i) = w;
    }
  }
  return scov;
}

// ---------------------------------------------------------------------------
// Graph and metrics
// ---------------------------------------------------------------------------

/// Polygon graph: vertex n sits at magnitudes[n] on axis n, edges carry the
/// scaled covariance. `strongest_partner[n]` is the other vertex with the
/// largest edge weight in column n (lowest index on ties), empty for |d|=1.
struct TomGraph {
  std::vector<double> magnitudes;
  ScaledCovariance edge_weights;
  std::vector<std::size_t> vertex_order;
  std::vector<std::optional<std::size_t>> strongest_partner;

  std::size_t size() const noexcept { return magnitudes.size(); }

  std::vector<double> vertex(std::size_t n) const {
    std::vector<double> coords(magnitudes.size(), 0.0);
    coords.at(n) = magnitudes[n];
    return coords;
  }

  friend bool operator==(const TomGraph&, const TomGraph&) = default;
};

inline TomGraph build_graph(std::span<const double> scores, const ScaledCovariance& scov) {
  if (scores.size() != scov.size()) {
    throw ShapeError("graph has " + std::to_string(scores.size()) +
                     " scores but covariance is " + std::to_string(scov.size()) + "x" +
                     std::to_string(scov.size()));
  }
  TomGraph g;
  g.magnitudes.assign(scores.begin(), scores.end());
  g.edge_weights = scov;
  const std::size_t n = scores.size();
  g.vertex_order.resize(n);
  g.strongest_partner.resize(n);
  for (std::size_t col = 0; col < n; ++col) {
    g.vertex_order[col] = col;
    for (std::size_t row = 0; row < n; ++row) {
      if (row == col) continue;
      auto& best = g.strongest_partner[col];
      if (!best || scov.at(row, col) > scov.at(*best, col)) best = row;
    }
  }
  return g;
}

inline TomGraph build_graph(const ScoreVector& scores, const ScaledCovariance& scov) {
  return build_graph(std::span<const double>(scores.values()), scov);
}

inline TomGraph build_graph(const ExpectationMatrix& expectation, const ScaledCovariance& scov) {
  return build_graph(std::span<const double>(expectation.diagonal), scov);
}

inline void to_json(nlohmann::json& j, const TomGraph& g) {
  std::vector<std::vector<double>> vertices;
  for (std::size_t n = 0; n < g.size(); ++n) vertices.push_back(g.vertex(n));
  nlohmann::json partners = nlohmann::json::array();
  for (const auto& p : g.strongest_partner) {
    partners.push_back(p ? nlohmann::json(*p) : nlohmann::json(nullptr));
  }
  j = {{"vertices", vertices},
       {"edge_weights", g.edge_weights.entries.rows()},
       {"vertex_order", g.vertex_order},
       {"strongest_partner", partners}};
}

inline void from_json(const nlohmann::json& j, TomGraph& g) {
  const auto vertices = j.at("vertices").get<std::vector<std::vector<double>>>();
  std::vector<double> magnitudes;
  for (std::size_t n = 0; n < vertices.size(); ++n) magnitudes.push_back(vertices[n].at(n));
  ScaledCovariance scov{
      SquareMatrix::from_rows(j.at("edge_weights").get<std::vector<std::vector<double>>>())};
  g = build_graph(std::span<const double>(magnitudes), scov);
}

/// The transformation f: stacks vertex coordinate rows, flooring each
/// vertex magnitude at `epsilon`. The result is diagonal.
inline SquareMatrix vertex_matrix(const TomGraph& graph, double epsilon = kAreaEpsilon) {
  SquareMatrix m(graph.size());
  for (std::size_t n = 0; n < graph.size(); ++n) {
    m(n, n) = std::max(std::abs(graph.magnitudes[n]), epsilon);
  }
  return m;
}

inline double graph_area(const TomGraph& graph, double epsilon = kAreaEpsilon) {
  return std::abs(determinant(vertex_matrix(graph, epsilon)));
}

/// Partial-area estimate for rectangular sample matrices: consecutive
/// |d|x|d| row blocks (last row repeated to fill the final block), summed
/// absolute determinants scaled by 1/2^(|d|-1).
inline double hausdorff_area(const SampleMatrix& samples) {
  if (samples.empty()) throw EmptyInput("hausdorff area of an empty sample matrix");
  const std::size_t d = samples.cols();
  double total = 0.0;
  for (std::size_t start = 0; start < samples.rows(); start += d) {
    SquareMatrix block(d);
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t src = std::min(start + r, samples.rows() - 1);
      for (std::size_t c = 0; c < d; ++c) block(r, c) = samples.at(src, c);
    }
    total += std::abs(determinant(std::move(block)));
  }
  return total / std::ldexp(1.0, static_cast<int>(d) - 1);
}

inline double tom_area_diff(double area_expected, double area_current) {
  return std::abs(area_expected - area_current);
}

/// Mean Euclidean distance between corresponding vertices.
inline double tom_distance(const TomGraph& expected, const TomGraph& current) {
  if (expected.size() != current.size()) {
    throw ShapeError("cannot compare a " + std::to_string(expected.size()) + "-vertex graph with a " +
                     std::to_string(current.size()) + "-vertex graph");
  }
  if (expected.size() == 0) throw EmptyInput("distance between empty graphs");
  double total = 0.0;
  for (std::size_t n = 0; n < expected.size(); ++n) {
    const auto a = expected.vertex(n);
    const auto b = current.vertex(n);
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(expected.size());
}

/// r = tma / area_expected;  loss = (r^2/2 + |r|/2) / 2 + tmd.
inline double alignment_loss(double tma, double area_expected, double tmd,
                             double min_area = kAreaEpsilon) {
  if (!(area_expected >= min_area)) {
    throw DegenerateArea("expected area " + std::to_string(area_expected) +
                         " is below the minimum " + std::to_string(min_area));
  }
  const double r = tma / area_expected;
  return (0.5 * r * r + 0.5 * std::abs(r)) / 2.0 + tmd;
}

inline bool check_convergence(double loss, double threshold = kConvergenceThreshold) {
  return loss < threshold;
}

struct AlignmentMetrics {
  double area_expected = 0.0;
  double area_current = 0.0;
  double tma = 0.0;
  double tmd = 0.0;
  double loss = 0.0;
  bool converged = false;

  friend bool operator==(const AlignmentMetrics&, const AlignmentMetrics&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AlignmentMetrics, area_expected, area_current, tma, tmd,
                                   loss, converged)

/// Full comparison of an expectation graph against a content graph. The
/// degenerate-area guard uses epsilon^|d|, the smallest area the vertex
/// floor can produce, so floored profiles (e.g. ideal repetitiveness 0)
/// stay usable.
inline AlignmentMetrics measure_alignment(const TomGraph& expected, const TomGraph& current,
                                          double threshold = kConvergenceThreshold,
                                          double epsilon = kAreaEpsilon) {
  if (expected.size() != current.size()) {
    throw ShapeError("expected and current graphs differ in dimension count");
  }
  AlignmentMetrics m;
  m.area_expected = graph_area(expected, epsilon);
  m.area_current = graph_area(current, epsilon);
  m.tma = tom_area_diff(m.area_expected, m.area_current);
  m.tmd = tom_distance(expected, current);
  const double min_area =
      std::pow(epsilon, static_cast<double>(expected.size())) * (1.0 - 1e-9);
  m.loss = alignment_loss(m.tma, m.area_expected, m.tmd, min_area);
  m.converged = check_convergence(m.loss, threshold);
  return m;
}

}  // namespace tomalign

#endif  // TOMALIGN_GEOMETRY_HPP
