#pragma once

// Randomized feature maps approximating shift-invariant kernels (Fourier) and
// random ReLU features, with optional PCA compression of the feature space.

#include <urf/core.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace urf {

enum class FeatureKind { fourier, relu };

inline std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::fourier ? "fourier" : "relu";
}

inline FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "fourier") return FeatureKind::fourier;
  if (name == "relu") return FeatureKind::relu;
  throw ValidationError(detail::concat("features.kind: unknown kind '", name,
                                       "' (expected fourier or relu)"));
}

struct FeatureSpec {
  FeatureKind kind = FeatureKind::fourier;
  std::size_t count = 0;      // L
  std::size_t input_dim = 0;  // d
  double lengthscale = 1.0;   // Gaussian RBF lengthscale; fourier only
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(count >= 1, "features.count: must be >= 1");
    detail::require(input_dim >= 1, "features.input_dim: must be >= 1");
    if (kind == FeatureKind::fourier) {
      detail::require(std::isfinite(lengthscale) && lengthscale > 0.0,
                      "features.lengthscale: must be positive and finite");
    }
  }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Immutable after construction. Rows of `directions` are the a_i, `offsets`
// the b_i. When a projection P (rows orthonormal) is attached, every output is
// P times the raw feature vector.
class FeatureMap {
 public:
  FeatureMap(FeatureSpec spec, Matrix directions, Vector offsets,
             std::optional<Matrix> projection = std::nullopt)
      : spec_(spec),
        directions_(std::move(directions)),
        offsets_(std::move(offsets)),
        projection_(std::move(projection)) {
    spec_.validate();
    const auto count = static_cast<Eigen::Index>(spec_.count);
    detail::require_dim(directions_.rows(), count, "FeatureMap directions rows");
    detail::require_dim(directions_.cols(),
                        static_cast<Eigen::Index>(spec_.input_dim),
                        "FeatureMap directions cols");
    detail::require_dim(offsets_.size(), count, "FeatureMap offsets");
    if (projection_) {
      detail::require_dim(projection_->cols(), count, "FeatureMap projection cols");
      detail::require(projection_->rows() >= 1 && projection_->rows() <= count,
                      "FeatureMap projection: row count must be in [1, L]");
      const Matrix gram = *projection_ * projection_->transpose();
      const double err =
          (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
      detail::require(err <= 1e-10,
                      detail::concat("FeatureMap projection: rows not orthonormal (",
                                     err, ")"));
    }
  }

  const FeatureSpec& spec() const { return spec_; }
  const Matrix& directions() const { return directions_; }
  const Vector& offsets() const { return offsets_; }
  const std::optional<Matrix>& projection() const { return projection_; }

  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t raw_dim() const { return spec_.count; }
  std::size_t output_dim() const {
    return projection_ ? static_cast<std::size_t>(projection_->rows())
                       : spec_.count;
  }

  Vector raw(const Vector& x) const {
    detail::require_dim(x.size(), static_cast<Eigen::Index>(spec_.input_dim),
                        "FeatureMap::evaluate input");
    const Vector pre = directions_ * x + offsets_;
    if (spec_.kind == FeatureKind::fourier) {
      const double scale = std::sqrt(2.0 / static_cast<double>(spec_.count));
      return scale * pre.array().cos().matrix();
    }
    return pre.cwiseMax(0.0);
  }

  Vector evaluate(const Vector& x) const {
    Vector phi = raw(x);
    if (projection_) return *projection_ * phi;
    return phi;
  }

  // output_dim x input_dim. ReLU uses derivative 0 at a zero pre-activation.
  Matrix jacobian(const Vector& x) const {
    detail::require_dim(x.size(), static_cast<Eigen::Index>(spec_.input_dim),
                        "FeatureMap::jacobian input");
    const Vector pre = directions_ * x + offsets_;
    Vector slope(pre.size());
    if (spec_.kind == FeatureKind::fourier) {
      const double scale = std::sqrt(2.0 / static_cast<double>(spec_.count));
      slope = -scale * pre.array().sin().matrix();
    } else {
      for (Eigen::Index i = 0; i < pre.size(); ++i) slope[i] = pre[i] > 0.0 ? 1.0 : 0.0;
    }
    Matrix raw_jac = slope.asDiagonal() * directions_;
    if (projection_) return *projection_ * raw_jac;
    return raw_jac;
  }

  // One feature vector per input row; result is T x output_dim.
  Matrix evaluate_rows(const Matrix& inputs) const {
    Matrix out(inputs.rows(), static_cast<Eigen::Index>(output_dim()));
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
      out.row(t) = evaluate(inputs.row(t).transpose()).transpose();
    }
    return out;
  }

  Matrix raw_rows(const Matrix& inputs) const {
    Matrix out(inputs.rows(), static_cast<Eigen::Index>(spec_.count));
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
      out.row(t) = raw(inputs.row(t).transpose()).transpose();
    }
    return out;
  }

  FeatureMap with_projection(Matrix projection) const {
    return FeatureMap(spec_, directions_, offsets_, std::move(projection));
  }

 private:
  FeatureSpec spec_;
  Matrix directions_;
  Vector offsets_;
  std::optional<Matrix> projection_;
};

// Fourier: a_i ~ N(0, l^-2 I), b_i ~ U[0, 2pi). ReLU: a_i ~ N(0, I),
// b_i ~ N(0, 1). Directions are drawn row by row, then all offsets.
inline FeatureMap build_feature_map(const FeatureSpec& spec) {
  spec.validate();
  const auto count = static_cast<Eigen::Index>(spec.count);
  const auto dim = static_cast<Eigen::Index>(spec.input_dim);
  Rng rng(spec.seed);
  Matrix directions(count, dim);
  Vector offsets(count);
  const double stddev =
      spec.kind == FeatureKind::fourier ? 1.0 / spec.lengthscale : 1.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) directions(i, j) = stddev * rng.normal();
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    if (spec.kind == FeatureKind::fourier) {
      offsets[i] = 2.0 * std::numbers::pi * rng.uniform();
    } else {
      offsets[i] = rng.normal();
    }
  }
  return FeatureMap(spec, std::move(directions), std::move(offsets));
}

struct PcaFit {
  FeatureMap map;
  Vector singular_values;  // full spectrum of Phi(X), descending
  std::size_t rank = 0;

  // Fraction of squared singular-value mass kept by the projection.
  double retained_energy() const {
    const double total = singular_values.squaredNorm();
    if (total <= 0.0) return 0.0;
    const auto kept = static_cast<Eigen::Index>(map.output_dim());
    return singular_values.head(kept).squaredNorm() / total;
  }
};

// Rows of the projection are the top right singular vectors of the T x L
// feature matrix, computed by a thin SVD of Phi(X) without forming a Gram
// matrix.
inline PcaFit fit_pca_projection(const FeatureMap& map, const Matrix& inputs,
                                 std::size_t reduced_dim) {
  detail::require(!map.projection().has_value(),
                  "fit_pca_projection: map already carries a projection");
  detail::require_dim(inputs.cols(), static_cast<Eigen::Index>(map.input_dim()),
                      "fit_pca_projection inputs");
  const auto limit = std::min<std::size_t>(map.raw_dim(),
                                           static_cast<std::size_t>(inputs.rows()));
  detail::require(reduced_dim >= 1 && reduced_dim <= limit,
                  detail::concat("pca.reduced_dim: ", reduced_dim,
                                 " out of range [1, ", limit, "]"));

  const Matrix phi = map.raw_rows(inputs);
  Eigen::BDCSVD<Matrix> svd(phi, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() > 0
                         ? sv[0] * static_cast<double>(std::max(phi.rows(), phi.cols())) *
                               std::numeric_limits<double>::epsilon()
                         : 0.0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > tol) ++rank;
  }
  if (rank < reduced_dim) {
    throw NumericalError(detail::concat("fit_pca_projection: rank deficiency, achieved rank ",
                                        rank, " < requested ", reduced_dim));
  }
  const auto kept = static_cast<Eigen::Index>(reduced_dim);
  Matrix projection = svd.matrixV().leftCols(kept).transpose();
  // Re-orthonormalize against accumulated rounding in the SVD.
  Eigen::HouseholderQR<Matrix> qr(projection.transpose());
  Matrix q = qr.householderQ() * Matrix::Identity(projection.cols(), kept);
  // Keep the singular-vector signs.
  for (Eigen::Index i = 0; i < kept; ++i) {
    if (q.col(i).dot(projection.row(i).transpose()) < 0.0) q.col(i) *= -1.0;
  }
  return PcaFit{map.with_projection(q.transpose()), sv, rank};
}

inline nlohmann::json to_json(const FeatureMap& map) {
  const auto& spec = map.spec();
  nlohmann::json j{{"kind", to_string(spec.kind)},
                   {"L", spec.count},
                   {"d", spec.input_dim},
                   {"lengthscale", spec.lengthscale},
                   {"seed", spec.seed}};
  if (const auto& p = map.projection()) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(p->size()));
    for (Eigen::Index r = 0; r < p->rows(); ++r) {
      for (Eigen::Index c = 0; c < p->cols(); ++c) flat.push_back((*p)(r, c));
    }
    j["projection"] = std::move(flat);
    j["proj_rows"] = p->rows();
  }
  return j;
}

inline FeatureMap feature_map_from_json(const nlohmann::json& j) {
  FeatureSpec spec;
  spec.kind = parse_feature_kind(j.at("kind").get<std::string>());
  spec.count = j.at("L").get<std::size_t>();
  spec.input_dim = j.at("d").get<std::size_t>();
  spec.lengthscale = j.at("lengthscale").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  FeatureMap map = build_feature_map(spec);
  if (j.contains("projection")) {
    const auto flat = j.at("projection").get<std::vector<double>>();
    const auto rows = j.at("proj_rows").get<Eigen::Index>();
    const auto cols = static_cast<Eigen::Index>(spec.count);
    detail::require(rows >= 1 && static_cast<Eigen::Index>(flat.size()) == rows * cols,
                    "features.projection: size does not match proj_rows x L");
    Matrix p(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) p(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    }
    return map.with_projection(std::move(p));
  }
  return map;
}

}  // namespace urf
