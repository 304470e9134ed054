#pragma once

// Reference plants, their one-step integrators, stage costs, and noisy
// transition-data generation.

#include <urf/dynamics.hpp>
#include <urf/worstcase.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace urf {

enum class SystemKind { source_spiral, van_der_pol, damped_pendulum };

inline std::string_view to_string(SystemKind k) {
  switch (k) {
    case SystemKind::source_spiral: return "source_spiral";
    case SystemKind::van_der_pol: return "van_der_pol";
    case SystemKind::damped_pendulum: return "damped_pendulum";
  }
  return "van_der_pol";
}

inline SystemKind parse_system_kind(std::string_view name) {
  if (name == "source_spiral") return SystemKind::source_spiral;
  if (name == "van_der_pol") return SystemKind::van_der_pol;
  if (name == "damped_pendulum") return SystemKind::damped_pendulum;
  throw ValidationError(detail::concat("system.kind: unknown system '", name, "'"));
}

struct SpiralParams {
  Matrix a;  // 2x2
  Matrix b;  // 2x2
  Vector c;  // 2
};

struct PendulumParams {
  double gravity = 9.81;
  double mass = 1.0;
  double length = 1.0;
  double friction = 1.0;
};

// Rotation by this angle, scaled by the expansion factor, gives the spiral's A.
constexpr double kSpiralRotation = 0.3;
constexpr double kSpiralExpansion = 1.05;

struct ReferenceSystem {
  SystemKind kind = SystemKind::van_der_pol;
  SpiralParams spiral;
  PendulumParams pendulum;

  // x+ = A x + cos(B x + c), A = 1.05 R(0.3), B_ij ~ N(0, 0.25), c_i ~ U(0, 2pi).
  static ReferenceSystem source_spiral(std::uint64_t seed) {
    ReferenceSystem sys;
    sys.kind = SystemKind::source_spiral;
    sys.spiral.a = Matrix(2, 2);
    const double cs = std::cos(kSpiralRotation);
    const double sn = std::sin(kSpiralRotation);
    sys.spiral.a << cs, -sn, sn, cs;
    sys.spiral.a *= kSpiralExpansion;
    Rng rng(seed);
    sys.spiral.b = Matrix(2, 2);
    for (Eigen::Index i = 0; i < 2; ++i) {
      for (Eigen::Index j = 0; j < 2; ++j) sys.spiral.b(i, j) = 0.5 * rng.normal();
    }
    sys.spiral.c = Vector(2);
    for (Eigen::Index i = 0; i < 2; ++i) sys.spiral.c[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return sys;
  }

  static ReferenceSystem spiral_with(Matrix a, Matrix b, Vector c) {
    ReferenceSystem sys;
    sys.kind = SystemKind::source_spiral;
    sys.spiral = {std::move(a), std::move(b), std::move(c)};
    return sys;
  }

  static ReferenceSystem van_der_pol() { return ReferenceSystem{}; }

  static ReferenceSystem damped_pendulum(PendulumParams params = {}) {
    ReferenceSystem sys;
    sys.kind = SystemKind::damped_pendulum;
    sys.pendulum = params;
    return sys;
  }

  Eigen::Index state_dim() const { return 2; }
  // Dimension of the coordinates the learned model works in.
  Eigen::Index model_dim() const { return kind == SystemKind::damped_pendulum ? 3 : 2; }
};

enum class IntegratorMethod { discrete_map, rk4, semi_implicit_euler };

inline std::string_view to_string(IntegratorMethod m) {
  switch (m) {
    case IntegratorMethod::discrete_map: return "discrete_map";
    case IntegratorMethod::rk4: return "rk4";
    case IntegratorMethod::semi_implicit_euler: return "semi_implicit_euler";
  }
  return "rk4";
}

inline IntegratorMethod parse_integrator(std::string_view name) {
  if (name == "discrete_map") return IntegratorMethod::discrete_map;
  if (name == "rk4") return IntegratorMethod::rk4;
  if (name == "semi_implicit_euler") return IntegratorMethod::semi_implicit_euler;
  throw ValidationError(detail::concat("integrator.method: unknown method '", name, "'"));
}

struct IntegratorSpec {
  IntegratorMethod method = IntegratorMethod::rk4;
  double dt = 0.05;
};

inline IntegratorSpec default_integrator(SystemKind kind) {
  switch (kind) {
    case SystemKind::source_spiral: return {IntegratorMethod::discrete_map, 1.0};
    case SystemKind::van_der_pol: return {IntegratorMethod::rk4, 0.05};
    case SystemKind::damped_pendulum: return {IntegratorMethod::semi_implicit_euler, 0.05};
  }
  return {};
}

// Van der Pol vector field in the printed variable order:
// x1' = (1 - x2^2) x1 - x2, x2' = x1.
inline Vector van_der_pol_field(const Vector& x) {
  Vector dx(2);
  dx[0] = (1.0 - x[1] * x[1]) * x[0] - x[1];
  dx[1] = x[0];
  return dx;
}

inline Vector pendulum_field(const PendulumParams& p, const Vector& x) {
  Vector dx(2);
  dx[0] = x[1];
  dx[1] = -(p.gravity / p.length) * std::sin(x[0]) -
          (p.friction / (p.mass * p.length * p.length)) * x[1];
  return dx;
}

template <typename Field>
Vector rk4_step(Field&& field, const Vector& x, double dt) {
  const Vector k1 = field(x);
  const Vector k2 = field(x + 0.5 * dt * k1);
  const Vector k3 = field(x + 0.5 * dt * k2);
  const Vector k4 = field(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void check_integrator(const ReferenceSystem& sys, const IntegratorSpec& integ) {
  const bool continuous = sys.kind != SystemKind::source_spiral;
  if (continuous) {
    detail::require(integ.method != IntegratorMethod::discrete_map,
                    detail::concat("integrator: discrete_map is incompatible with ", to_string(sys.kind)));
    detail::require(std::isfinite(integ.dt) && integ.dt > 0.0, "integrator.dt: must be positive");
    detail::require(sys.kind != SystemKind::van_der_pol || integ.method == IntegratorMethod::rk4,
                    "integrator: van_der_pol requires rk4");
  } else {
    detail::require(integ.method == IntegratorMethod::discrete_map,
                    "integrator: source_spiral is a discrete map and requires discrete_map");
  }
}

// One step in the system's native coordinates.
inline Vector true_step(const ReferenceSystem& sys, const IntegratorSpec& integ, const Vector& x) {
  check_integrator(sys, integ);
  detail::require_dim(x.size(), sys.state_dim(), "true_step state");
  if (sys.kind == SystemKind::source_spiral) {
    const Vector arg = sys.spiral.b * x + sys.spiral.c;
    return sys.spiral.a * x + arg.array().cos().matrix();
  }
  if (sys.kind == SystemKind::van_der_pol) {
    return rk4_step(van_der_pol_field, x, integ.dt);
  }
  const auto& p = sys.pendulum;
  if (integ.method == IntegratorMethod::rk4) {
    return rk4_step([&](const Vector& s) { return pendulum_field(p, s); }, x, integ.dt);
  }
  Vector next(2);
  next[1] = x[1] + integ.dt * (-(p.gravity / p.length) * std::sin(x[0]) -
                               (p.friction / (p.mass * p.length * p.length)) * x[1]);
  next[0] = x[0] + integ.dt * next[1];
  return next;
}

// (theta, v) -> (l cos theta, l sin theta, v).
inline Vector pendulum_embed(const Vector& x, double length = 1.0) {
  detail::require_dim(x.size(), 2, "pendulum_embed");
  Vector out(3);
  out << length * std::cos(x[0]), length * std::sin(x[0]), x[1];
  return out;
}

inline Vector to_model_coordinates(const ReferenceSystem& sys, const Vector& x) {
  if (sys.kind == SystemKind::damped_pendulum) return pendulum_embed(x, sys.pendulum.length);
  return x;
}

inline double pendulum_energy(const PendulumParams& p, const Vector& x) {
  return 0.5 * p.mass * p.length * p.length * x[1] * x[1] +
         p.mass * p.gravity * p.length * (1.0 - std::cos(x[0]));
}

// Native-coordinate rollout of N steps, converted to model coordinates.
inline Trajectory simulate(const ReferenceSystem& sys, const IntegratorSpec& integ, const Vector& x0,
                           Eigen::Index horizon) {
  detail::require(horizon >= 1, "simulate: horizon must be >= 1");
  Trajectory traj{Matrix(horizon + 1, sys.model_dim())};
  Vector x = x0;
  traj.states.row(0) = to_model_coordinates(sys, x).transpose();
  for (Eigen::Index n = 1; n <= horizon; ++n) {
    x = true_step(sys, integ, x);
    traj.states.row(n) = to_model_coordinates(sys, x).transpose();
  }
  return traj;
}

enum class CostKind { quadratic, pendulum_upright };

inline std::string_view to_string(CostKind k) {
  return k == CostKind::quadratic ? "quadratic" : "pendulum-upright";
}

inline CostKind parse_cost_kind(std::string_view name) {
  if (name == "quadratic") return CostKind::quadratic;
  if (name == "pendulum-upright") return CostKind::pendulum_upright;
  throw ValidationError(detail::concat("cost: unknown kind '", name,
                                       "' (expected quadratic or pendulum-upright)"));
}

// c(x) = x^T x.
inline CostFunction quadratic_cost(Eigen::Index dim) {
  return CostFunction{"quadratic", dim, [](const Vector& x) { return x.squaredNorm(); },
                      [](const Vector& x) -> Vector { return 2.0 * x; }};
}

// c(a, b, c) = b^2 - a + 0.1 c^2 on the embedded pendulum state.
inline CostFunction pendulum_upright_cost() {
  return CostFunction{"pendulum-upright", 3,
                      [](const Vector& x) { return x[1] * x[1] - x[0] + 0.1 * x[2] * x[2]; },
                      [](const Vector& x) -> Vector {
                        Vector g(3);
                        g << -1.0, 2.0 * x[1], 0.2 * x[2];
                        return g;
                      }};
}

inline CostFunction stage_cost(CostKind kind, Eigen::Index dim) {
  if (kind == CostKind::pendulum_upright) {
    detail::require_dim(dim, 3, "pendulum-upright cost");
    return pendulum_upright_cost();
  }
  return quadratic_cost(dim);
}

inline CostKind default_cost(SystemKind kind) {
  return kind == SystemKind::damped_pendulum ? CostKind::pendulum_upright : CostKind::quadratic;
}

struct RolloutConfig {
  std::size_t num_rollouts = 5;
  std::size_t length = 50;
  double noise_std = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(num_rollouts >= 1, "rollouts.num_rollouts: must be >= 1");
    detail::require(length >= 1, "rollouts.length: must be >= 1");
    detail::require(std::isfinite(noise_std) && noise_std >= 0.0, "rollouts.noise_std: must be >= 0");
  }
};

// spiral: N(0, I2); Van der Pol: U(-1, 1)^2; pendulum: theta ~ U(-pi, pi), v ~ U(-1, 1).
inline Vector sample_initial_state(const ReferenceSystem& sys, Rng& rng) {
  Vector x(2);
  switch (sys.kind) {
    case SystemKind::source_spiral:
      x[0] = rng.normal();
      x[1] = rng.normal();
      break;
    case SystemKind::van_der_pol:
      x[0] = rng.uniform(-1.0, 1.0);
      x[1] = rng.uniform(-1.0, 1.0);
      break;
    case SystemKind::damped_pendulum:
      x[0] = rng.uniform(-std::numbers::pi, std::numbers::pi);
      x[1] = rng.uniform(-1.0, 1.0);
      break;
  }
  return x;
}

struct GeneratedData {
  Matrix inputs;                     // T x p, model coordinates
  Matrix successors;                 // T x p, noisy observed x+
  std::vector<Trajectory> rollouts;  // noise-free, model coordinates
  double noise_std = 0.0;

  RegressionDataset residuals(const NominalModel& nominal, double fit_noise_std) const {
    RegressionDataset ds{inputs, Matrix(successors.rows(), successors.cols()), fit_noise_std};
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
      ds.targets.row(t) = successors.row(t) - nominal.value(inputs.row(t).transpose()).transpose();
    }
    return ds;
  }
};

// Noise is added to the observed successor only; rollouts evolve noise-free.
inline GeneratedData generate_dataset(const ReferenceSystem& sys, const IntegratorSpec& integ,
                                      const RolloutConfig& cfg) {
  cfg.validate();
  check_integrator(sys, integ);
  Rng rng(cfg.seed);
  const auto len = static_cast<Eigen::Index>(cfg.length);
  const auto total = static_cast<Eigen::Index>(cfg.num_rollouts) * len;
  GeneratedData out;
  out.noise_std = cfg.noise_std;
  out.inputs.resize(total, sys.model_dim());
  out.successors.resize(total, sys.model_dim());
  Eigen::Index row = 0;
  for (std::size_t r = 0; r < cfg.num_rollouts; ++r) {
    const Vector x0 = sample_initial_state(sys, rng);
    Trajectory traj = simulate(sys, integ, x0, len);
    for (Eigen::Index n = 0; n < len; ++n, ++row) {
      out.inputs.row(row) = traj.states.row(n);
      Vector noisy = traj.state(n + 1);
      for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy[i] += cfg.noise_std * rng.normal();
      out.successors.row(row) = noisy.transpose();
    }
    out.rollouts.push_back(std::move(traj));
  }
  return out;
}

}  // namespace urf
