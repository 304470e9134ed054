#pragma once

// Bayesian linear regression over feature weights with a N(0, I) prior, and
// chi-squared credible ellipsoids built from the resulting posteriors.

#include <urf/core.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

namespace urf {

struct RegressionDataset {
  Matrix inputs;   // T x d
  Matrix targets;  // T x p residuals y - h(x)
  double noise_std = 0.01;

  void validate() const {
    detail::require_dim(targets.rows(), inputs.rows(), "RegressionDataset targets rows");
    detail::require(std::isfinite(noise_std) && noise_std > 0.0,
                    "RegressionDataset.noise_std: must be positive");
  }
  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index output_dim() const { return targets.cols(); }
};

namespace detail {

constexpr double kEigenFloor = 1e-12;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Lower Cholesky factor of a symmetric PSD matrix. Eigenvalues below the
// floor are clamped when the plain factorization fails.
inline Matrix floored_cholesky(Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  Vector values = eig.eigenvalues().cwiseMax(kEigenFloor);
  m = symmetrized(eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose());
  Eigen::LLT<Matrix> retry(m);
  if (retry.info() != Eigen::Success) {
    throw NumericalError("cholesky: matrix not positive definite after eigenvalue floor");
  }
  return retry.matrixL();
}

inline std::vector<double> flatten(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

inline Matrix unflatten(const std::vector<double>& flat, Eigen::Index rows,
                        Eigen::Index cols, const char* what) {
  require(static_cast<Eigen::Index>(flat.size()) == rows * cols,
          concat(what, ": array length does not match dims"));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

// Gaussian posterior N(mean, covariance). Keeps the precision
// Phi^T Phi + sigma^2 I and moment Phi^T y so data can be appended.
class WeightPosterior {
 public:
  WeightPosterior(Matrix precision, Vector moment, double noise_var, std::size_t data_count)
      : precision_(std::move(precision)),
        moment_(std::move(moment)),
        noise_var_(noise_var),
        data_count_(data_count) {
    detail::require(std::isfinite(noise_var_) && noise_var_ > 0.0,
                    "WeightPosterior: noise variance must be positive");
    detail::require_dim(precision_.cols(), precision_.rows(), "WeightPosterior precision");
    detail::require_dim(moment_.size(), precision_.rows(), "WeightPosterior moment");
    const Eigen::Index dim = precision_.rows();
    Eigen::LLT<Matrix> llt(precision_);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("fit_blr: precision matrix is not positive definite");
    }
    mean_ = llt.solve(moment_);
    // sigma^2 (L L^T)^{-1} = sigma^2 L^{-T} L^{-1}, via two triangular solves.
    Matrix inv_lower = llt.matrixL().solve(Matrix::Identity(dim, dim));
    covariance_ = detail::symmetrized(noise_var_ * inv_lower.transpose() * inv_lower);
    covariance_factor_ = detail::floored_cholesky(covariance_);
  }

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& covariance_factor() const { return covariance_factor_; }
  const Matrix& precision() const { return precision_; }
  const Vector& moment() const { return moment_; }
  double noise_var() const { return noise_var_; }
  std::size_t data_count() const { return data_count_; }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Matrix precision_;
  Vector moment_;
  double noise_var_;
  std::size_t data_count_;
  Vector mean_;
  Matrix covariance_;
  Matrix covariance_factor_;
};

inline WeightPosterior prior_posterior(Eigen::Index dim, double noise_var) {
  return WeightPosterior(noise_var * Matrix::Identity(dim, dim), Vector::Zero(dim),
                         noise_var, 0);
}

// mean = (Phi^T Phi + s2 I)^-1 Phi^T y, cov = s2 (Phi^T Phi + s2 I)^-1.
inline WeightPosterior fit_blr(const Matrix& features, const Vector& targets,
                               double noise_var) {
  detail::require(std::isfinite(noise_var) && noise_var > 0.0,
                  "fit_blr: noise variance must be positive");
  detail::require_dim(targets.size(), features.rows(), "fit_blr targets");
  detail::require(features.allFinite() && targets.allFinite(),
                  "fit_blr: non-finite entries in features or targets");
  const Eigen::Index dim = features.cols();
  Matrix precision = noise_var * Matrix::Identity(dim, dim);
  precision.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose());
  precision.triangularView<Eigen::StrictlyUpper>() = precision.transpose();
  Vector moment = features.transpose() * targets;
  return WeightPosterior(std::move(precision), std::move(moment), noise_var,
                         static_cast<std::size_t>(features.rows()));
}

inline WeightPosterior update_blr(const WeightPosterior& posterior, const Matrix& new_features,
                                  const Vector& new_targets) {
  detail::require_dim(new_features.cols(), posterior.dim(), "update_blr features cols");
  detail::require_dim(new_targets.size(), new_features.rows(), "update_blr targets");
  detail::require(new_features.allFinite() && new_targets.allFinite(),
                  "update_blr: non-finite entries in features or targets");
  if (new_features.rows() == 0) return posterior;
  Matrix precision = posterior.precision();
  Matrix gram = new_features.transpose() * new_features;
  precision += detail::symmetrized(gram);
  Vector moment = posterior.moment() + new_features.transpose() * new_targets;
  return WeightPosterior(std::move(precision), std::move(moment), posterior.noise_var(),
                         posterior.data_count() + static_cast<std::size_t>(new_features.rows()));
}

// Regularized lower incomplete gamma P(a, x): power series below a + 1,
// modified Lentz continued fraction for Q(a, x) above.
inline double regularized_lower_gamma(double a, double x) {
  detail::require(a > 0.0, "regularized_lower_gamma: a must be positive");
  if (x <= 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return std::min(1.0, sum * std::exp(log_prefix));
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

inline double chi2_cdf(std::size_t dof, double q) {
  return regularized_lower_gamma(0.5 * static_cast<double>(dof), 0.5 * q);
}

// Bracketed bisection on the chi-squared CDF; absolute tolerance 1e-11.
inline double chi2_quantile(std::size_t dof, double alpha) {
  detail::require(dof >= 1, "chi2_quantile: dof must be >= 1");
  detail::require(alpha > 0.0 && alpha < 1.0, "chi2_quantile: alpha must lie in (0, 1)");
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(dof, hi) < alpha) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 400 && hi - lo > 1e-11; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(dof, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Ellipsoid {w : (w - c)^T S^-1 (w - c) <= 1}. A singleton set (S = 0) is the
// certainty-equivalent degenerate case and contains only its center.
class UncertaintySet {
 public:
  UncertaintySet(Vector center, Matrix shape, double level)
      : center_(std::move(center)), shape_(std::move(shape)), level_(level) {
    detail::require_dim(shape_.rows(), center_.size(), "UncertaintySet shape rows");
    detail::require_dim(shape_.cols(), center_.size(), "UncertaintySet shape cols");
    shape_ = detail::symmetrized(shape_);
    shape_factor_ = detail::floored_cholesky(shape_);
  }

  static UncertaintySet singleton(Vector center) {
    return UncertaintySet(std::move(center));
  }

  const Vector& center() const { return center_; }
  const Matrix& shape() const { return shape_; }
  const Matrix& shape_factor() const { return shape_factor_; }
  double level() const { return level_; }
  bool is_singleton() const { return singleton_; }
  Eigen::Index dim() const { return center_.size(); }

  // (w - c)^T S^-1 (w - c); for a singleton, 0 at the center and +inf elsewhere.
  double quadratic_form(const Vector& w) const {
    detail::require_dim(w.size(), center_.size(), "UncertaintySet::contains");
    if (singleton_) {
      return (w - center_).lpNorm<Eigen::Infinity>() <= 1e-12
                 ? 0.0
                 : std::numeric_limits<double>::infinity();
    }
    const Vector z = shape_factor_.triangularView<Eigen::Lower>().solve(w - center_);
    return z.squaredNorm();
  }

  bool contains(const Vector& w) const { return quadratic_form(w) <= 1.0 + 1e-12; }

 private:
  explicit UncertaintySet(Vector center)
      : center_(std::move(center)),
        shape_(Matrix::Zero(center_.size(), center_.size())),
        shape_factor_(Matrix::Zero(center_.size(), center_.size())),
        level_(0.0),
        singleton_(true) {}

  Vector center_;
  Matrix shape_;
  Matrix shape_factor_;
  double level_ = 0.0;
  bool singleton_ = false;
};

inline UncertaintySet credible_set(const WeightPosterior& posterior, double alpha) {
  detail::require(alpha > 0.0 && alpha < 1.0, "credible_set: alpha must lie in (0, 1)");
  const double radius2 = chi2_quantile(static_cast<std::size_t>(posterior.dim()), alpha);
  return UncertaintySet(posterior.mean(), radius2 * posterior.covariance(), alpha);
}

inline UncertaintySet singleton_set(const WeightPosterior& posterior) {
  return UncertaintySet::singleton(posterior.mean());
}

inline nlohmann::json to_json(const WeightPosterior& posterior) {
  return {{"dim", posterior.dim()},
          {"noise_var", posterior.noise_var()},
          {"data_count", posterior.data_count()},
          {"precision", detail::flatten(posterior.precision())},
          {"moment", detail::to_std(posterior.moment())},
          {"mean", detail::to_std(posterior.mean())},
          {"covariance", detail::flatten(posterior.covariance())}};
}

inline WeightPosterior posterior_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<Eigen::Index>();
  return WeightPosterior(
      detail::unflatten(j.at("precision").get<std::vector<double>>(), dim, dim, "posterior.precision"),
      detail::to_vector(j.at("moment").get<std::vector<double>>()), j.at("noise_var").get<double>(),
      j.at("data_count").get<std::size_t>());
}

inline nlohmann::json to_json(const UncertaintySet& set) {
  nlohmann::json j{{"dim", set.dim()},
                   {"center", detail::to_std(set.center())},
                   {"singleton", set.is_singleton()},
                   {"level", set.level()}};
  if (!set.is_singleton()) j["shape"] = detail::flatten(set.shape());
  return j;
}

inline UncertaintySet uncertainty_set_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<Eigen::Index>();
  Vector center = detail::to_vector(j.at("center").get<std::vector<double>>());
  detail::require_dim(center.size(), dim, "set.center");
  if (j.at("singleton").get<bool>()) return UncertaintySet::singleton(std::move(center));
  return UncertaintySet(std::move(center),
                        detail::unflatten(j.at("shape").get<std::vector<double>>(), dim, dim, "set.shape"),
                        j.at("level").get<double>());
}

}  // namespace urf
