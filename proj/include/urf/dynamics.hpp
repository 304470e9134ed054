#pragma once

// Set-valued random-feature dynamics: x+ = h(x) + [phi(x)^T w_d]_d with each
// w_d ranging over its own ellipsoid.

#include <urf/features.hpp>
#include <urf/regression.hpp>

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace urf {

// Known part h of the one-step map, with its Jacobian.
class NominalModel {
 public:
  enum class Kind { identity, affine, custom };
  using ValueFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;

  static NominalModel identity(Eigen::Index dim) {
    detail::require(dim >= 1, "NominalModel: state dimension must be >= 1");
    NominalModel m(Kind::identity, dim);
    return m;
  }

  static NominalModel affine(Matrix a, Vector c) {
    detail::require_dim(a.rows(), a.cols(), "NominalModel affine matrix");
    detail::require_dim(c.size(), a.rows(), "NominalModel affine offset");
    NominalModel m(Kind::affine, a.rows());
    m.a_ = std::move(a);
    m.c_ = std::move(c);
    return m;
  }

  static NominalModel custom(Eigen::Index dim, ValueFn value, JacobianFn jacobian) {
    detail::require(value && jacobian, "NominalModel: custom callbacks must be set");
    NominalModel m(Kind::custom, dim);
    m.value_fn_ = std::move(value);
    m.jacobian_fn_ = std::move(jacobian);
    return m;
  }

  Kind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  const Matrix& matrix() const { return a_; }
  const Vector& offset() const { return c_; }

  Vector value(const Vector& x) const {
    detail::require_dim(x.size(), dim_, "NominalModel::value");
    switch (kind_) {
      case Kind::identity: return x;
      case Kind::affine: return a_ * x + c_;
      case Kind::custom: break;
    }
    return value_fn_(x);
  }

  Matrix jacobian(const Vector& x) const {
    detail::require_dim(x.size(), dim_, "NominalModel::jacobian");
    switch (kind_) {
      case Kind::identity: return Matrix::Identity(dim_, dim_);
      case Kind::affine: return a_;
      case Kind::custom: break;
    }
    return jacobian_fn_(x);
  }

 private:
  NominalModel(Kind kind, Eigen::Index dim) : kind_(kind), dim_(dim) {}

  Kind kind_;
  Eigen::Index dim_;
  Matrix a_;
  Vector c_;
  ValueFn value_fn_;
  JacobianFn jacobian_fn_;
};

// One weight vector per output dimension.
using DimWeights = std::vector<Vector>;
// One DimWeights per time step n = 0..N-1.
using WeightSequence = std::vector<DimWeights>;

struct Trajectory {
  Matrix states;  // (N + 1) x p

  Eigen::Index horizon() const { return states.rows() - 1; }
  Vector state(Eigen::Index n) const { return states.row(n).transpose(); }
};

// Rollout left the region |x_i| <= 1e6 or produced non-finite values.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& message, Eigen::Index step)
      : NumericalError(message), step_(step) {}
  Eigen::Index step() const { return step_; }

 private:
  Eigen::Index step_;
};

constexpr double kDivergenceBound = 1e6;

class UrfModel {
 public:
  UrfModel(NominalModel nominal, FeatureMap features, std::vector<WeightPosterior> posteriors,
           std::vector<UncertaintySet> sets)
      : nominal_(std::move(nominal)),
        features_(std::move(features)),
        posteriors_(std::move(posteriors)),
        sets_(std::move(sets)) {
    const auto p = static_cast<std::size_t>(nominal_.dim());
    detail::require(features_.input_dim() == p, "UrfModel: feature input_dim must equal state dim");
    detail::require(posteriors_.size() == p, "UrfModel: need one posterior per state dimension");
    detail::require(sets_.size() == p, "UrfModel: need one uncertainty set per state dimension");
    const auto k = static_cast<Eigen::Index>(features_.output_dim());
    for (std::size_t d = 0; d < p; ++d) {
      detail::require_dim(posteriors_[d].dim(), k, "UrfModel posterior");
      detail::require_dim(sets_[d].dim(), k, "UrfModel uncertainty set");
    }
  }

  const NominalModel& nominal() const { return nominal_; }
  const FeatureMap& features() const { return features_; }
  const std::vector<WeightPosterior>& posteriors() const { return posteriors_; }
  const std::vector<UncertaintySet>& sets() const { return sets_; }
  Eigen::Index state_dim() const { return nominal_.dim(); }
  Eigen::Index feature_dim() const { return static_cast<Eigen::Index>(features_.output_dim()); }

  bool is_certainty_equivalent() const {
    for (const auto& s : sets_) {
      if (!s.is_singleton()) return false;
    }
    return true;
  }

  DimWeights mean_weights() const {
    DimWeights w;
    w.reserve(posteriors_.size());
    for (const auto& post : posteriors_) w.push_back(post.mean());
    return w;
  }

  UrfModel with_sets(std::vector<UncertaintySet> sets) const {
    return UrfModel(nominal_, features_, posteriors_, std::move(sets));
  }

 private:
  NominalModel nominal_;
  FeatureMap features_;
  std::vector<WeightPosterior> posteriors_;
  std::vector<UncertaintySet> sets_;
};

inline void check_weights(const UrfModel& model, const DimWeights& w) {
  detail::require(static_cast<Eigen::Index>(w.size()) == model.state_dim(),
                  "weights: need one vector per state dimension");
  for (const auto& wd : w) detail::require_dim(wd.size(), model.feature_dim(), "weights");
}

inline Vector step_with_weights(const UrfModel& model, const Vector& x, const DimWeights& w) {
  check_weights(model, w);
  Vector next = model.nominal().value(x);
  const Vector phi = model.features().evaluate(x);
  for (Eigen::Index d = 0; d < next.size(); ++d) next[d] += phi.dot(w[static_cast<std::size_t>(d)]);
  return next;
}

inline Vector mean_step(const UrfModel& model, const Vector& x) {
  return step_with_weights(model, x, model.mean_weights());
}

// d x+ / d x = dh/dx + rows w_d^T dphi/dx.
inline Matrix transition_jacobian(const UrfModel& model, const Vector& x, const DimWeights& w) {
  check_weights(model, w);
  Matrix jac = model.nominal().jacobian(x);
  const Matrix feat_jac = model.features().jacobian(x);
  for (Eigen::Index d = 0; d < jac.rows(); ++d) {
    jac.row(d) += w[static_cast<std::size_t>(d)].transpose() * feat_jac;
  }
  return jac;
}

namespace detail {

inline void guard_state(const Vector& x, Eigen::Index step) {
  if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > kDivergenceBound) {
    throw DivergenceError(concat("rollout diverged at step ", step,
                                 " (|x| exceeds 1e6 or is non-finite)"),
                          step);
  }
}

}  // namespace detail

// Forward pass under a per-step weight sequence; the horizon is its length.
inline Trajectory rollout(const UrfModel& model, const Vector& x0, const WeightSequence& weights) {
  detail::require_dim(x0.size(), model.state_dim(), "rollout x0");
  const auto horizon = static_cast<Eigen::Index>(weights.size());
  Trajectory traj{Matrix(horizon + 1, model.state_dim())};
  traj.states.row(0) = x0.transpose();
  Vector x = x0;
  for (Eigen::Index n = 0; n < horizon; ++n) {
    x = step_with_weights(model, x, weights[static_cast<std::size_t>(n)]);
    detail::guard_state(x, n + 1);
    traj.states.row(n + 1) = x.transpose();
  }
  return traj;
}

inline Trajectory rollout_fixed(const UrfModel& model, const Vector& x0, Eigen::Index horizon,
                                const DimWeights& w) {
  detail::require(horizon >= 1, "rollout: horizon must be >= 1");
  return rollout(model, x0, WeightSequence(static_cast<std::size_t>(horizon), w));
}

inline Trajectory rollout_mean(const UrfModel& model, const Vector& x0, Eigen::Index horizon) {
  return rollout_fixed(model, x0, horizon, model.mean_weights());
}

// Uniform draw from the ellipsoid: c + F (r u), u uniform on the unit sphere,
// r = U^(1/k) so that the radius follows the uniform-in-ball law.
inline Vector sample_in_set(const UncertaintySet& set, Rng& rng) {
  if (set.is_singleton()) return set.center();
  const Eigen::Index k = set.dim();
  Vector u = rng.normal_vector(k);
  double norm = u.norm();
  while (norm == 0.0) {
    u = rng.normal_vector(k);
    norm = u.norm();
  }
  const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(k));
  return set.center() + set.shape_factor() * (u * (radius / norm));
}

inline DimWeights sample_weights(const UrfModel& model, Rng& rng) {
  DimWeights w;
  w.reserve(model.sets().size());
  for (const auto& s : model.sets()) w.push_back(sample_in_set(s, rng));
  return w;
}

enum class TubeMode { fixed_weight, per_step };

inline std::string_view to_string(TubeMode mode) {
  return mode == TubeMode::fixed_weight ? "fixed-weight" : "per-step";
}

inline TubeMode parse_tube_mode(std::string_view name) {
  if (name == "fixed-weight") return TubeMode::fixed_weight;
  if (name == "per-step") return TubeMode::per_step;
  throw ValidationError(detail::concat("tube.mode: unknown mode '", name,
                                       "' (expected fixed-weight or per-step)"));
}

inline std::vector<Trajectory> sample_uncertainty_tube(const UrfModel& model, const Vector& x0,
                                                       Eigen::Index horizon, std::size_t num_samples,
                                                       TubeMode mode, std::uint64_t seed) {
  detail::require(num_samples >= 1, "sample_uncertainty_tube: num_samples must be >= 1");
  detail::require(horizon >= 1, "sample_uncertainty_tube: horizon must be >= 1");
  Rng rng(seed);
  std::vector<Trajectory> out;
  out.reserve(num_samples);
  for (std::size_t s = 0; s < num_samples; ++s) {
    WeightSequence seq;
    seq.reserve(static_cast<std::size_t>(horizon));
    if (mode == TubeMode::fixed_weight) {
      seq.assign(static_cast<std::size_t>(horizon), sample_weights(model, rng));
    } else {
      for (Eigen::Index n = 0; n < horizon; ++n) seq.push_back(sample_weights(model, rng));
    }
    out.push_back(rollout(model, x0, seq));
  }
  return out;
}

struct FitOptions {
  double alpha = 0.95;
  bool certainty_equivalent = false;
};

// Per-dimension BLR on a shared feature map, then credible (or singleton) sets.
inline UrfModel fit_urf_model(NominalModel nominal, FeatureMap features,
                              const RegressionDataset& data, const FitOptions& options) {
  data.validate();
  detail::require_dim(data.output_dim(), nominal.dim(), "fit_urf_model targets");
  const Matrix phi = features.evaluate_rows(data.inputs);
  const double noise_var = data.noise_std * data.noise_std;
  std::vector<WeightPosterior> posteriors;
  std::vector<UncertaintySet> sets;
  for (Eigen::Index d = 0; d < data.output_dim(); ++d) {
    posteriors.push_back(fit_blr(phi, data.targets.col(d), noise_var));
    sets.push_back(options.certainty_equivalent ? singleton_set(posteriors.back())
                                                : credible_set(posteriors.back(), options.alpha));
  }
  return UrfModel(std::move(nominal), std::move(features), std::move(posteriors), std::move(sets));
}

inline nlohmann::json to_json(const NominalModel& nominal) {
  switch (nominal.kind()) {
    case NominalModel::Kind::identity:
      return {{"kind", "identity"}, {"dim", nominal.dim()}};
    case NominalModel::Kind::affine:
      return {{"kind", "affine"},
              {"dim", nominal.dim()},
              {"A", detail::flatten(nominal.matrix())},
              {"c", detail::to_std(nominal.offset())}};
    case NominalModel::Kind::custom:
      break;
  }
  throw ValidationError("NominalModel: custom callbacks cannot be serialized");
}

inline NominalModel nominal_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto dim = j.at("dim").get<Eigen::Index>();
  if (kind == "identity") return NominalModel::identity(dim);
  if (kind == "affine") {
    return NominalModel::affine(detail::unflatten(j.at("A").get<std::vector<double>>(), dim, dim, "nominal.A"),
                                detail::to_vector(j.at("c").get<std::vector<double>>()));
  }
  throw ValidationError(detail::concat("nominal.kind: unsupported kind '", kind, "'"));
}

inline nlohmann::json to_json(const UrfModel& model) {
  nlohmann::json dims = nlohmann::json::array();
  for (std::size_t d = 0; d < model.posteriors().size(); ++d) {
    dims.push_back({{"posterior", to_json(model.posteriors()[d])}, {"set", to_json(model.sets()[d])}});
  }
  return {{"format", "urf-model/1"},
          {"state_dim", model.state_dim()},
          {"nominal", to_json(model.nominal())},
          {"features", to_json(model.features())},
          {"dims", std::move(dims)}};
}

inline UrfModel urf_model_from_json(const nlohmann::json& j) {
  detail::require(j.value("format", "") == "urf-model/1", "model bundle: unknown format tag");
  std::vector<WeightPosterior> posteriors;
  std::vector<UncertaintySet> sets;
  for (const auto& block : j.at("dims")) {
    posteriors.push_back(posterior_from_json(block.at("posterior")));
    sets.push_back(uncertainty_set_from_json(block.at("set")));
  }
  return UrfModel(nominal_from_json(j.at("nominal")), feature_map_from_json(j.at("features")),
                  std::move(posteriors), std::move(sets));
}

}  // namespace urf
