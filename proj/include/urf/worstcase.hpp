#pragma once

// Worst-case (and best-case) weight realizations of a URF model over its
// product of ellipsoids. The forward pass shoots the dynamics, the backward
// pass propagates co-states, and each step either jumps to the closed-form
// Hamiltonian minimizer (exact update) or moves part of the way towards it
// (Frank-Wolfe update).

#include <urf/dynamics.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace urf {

// User-facing stage cost c(x). The solver negates it internally when
// searching for the worst case, so "worst" always means largest total c.
struct CostFunction {
  std::string kind = "custom";
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

enum class Direction { worst, best };

inline std::string_view to_string(Direction d) { return d == Direction::worst ? "worst" : "best"; }

inline Direction parse_direction(std::string_view name) {
  if (name == "worst") return Direction::worst;
  if (name == "best") return Direction::best;
  throw ValidationError(detail::concat("solver.direction: unknown direction '", name, "'"));
}

enum class StepSchedule { fw_standard, full_step, constant };

inline std::string_view to_string(StepSchedule s) {
  switch (s) {
    case StepSchedule::fw_standard: return "fw_standard";
    case StepSchedule::full_step: return "full_step";
    case StepSchedule::constant: return "constant";
  }
  return "fw_standard";
}

inline StepSchedule parse_schedule(std::string_view name) {
  if (name == "fw_standard") return StepSchedule::fw_standard;
  if (name == "full_step") return StepSchedule::full_step;
  if (name == "constant") return StepSchedule::constant;
  throw ValidationError(detail::concat("solver.schedule: unknown schedule '", name,
                                       "' (expected fw_standard, full_step or constant)"));
}

// gamma_k for outer iteration k = 0, 1, ...
inline double step_size(StepSchedule schedule, std::size_t k, std::size_t total_iterations) {
  switch (schedule) {
    case StepSchedule::fw_standard: return 2.0 / (static_cast<double>(k) + 2.0);
    case StepSchedule::full_step: return 1.0;
    case StepSchedule::constant: return 1.0 / static_cast<double>(total_iterations);
  }
  return 1.0;
}

struct SolverConfig {
  Direction direction = Direction::worst;
  std::size_t horizon = 50;
  std::size_t outer_iterations = 200;
  StepSchedule schedule = StepSchedule::fw_standard;
  double tol = 1e-8;
  Vector x0;
  bool record_iterates = false;

  void validate(const UrfModel& model) const {
    detail::require(horizon >= 1, "solver.horizon: must be >= 1");
    detail::require(outer_iterations >= 1, "solver.outer_iterations: must be >= 1");
    detail::require(std::isfinite(tol) && tol >= 0.0, "solver.tol: must be >= 0");
    detail::require_dim(x0.size(), model.state_dim(), "solver.x0");
  }
};

struct WorstCaseResult {
  WeightSequence weights;       // reported iterate, one DimWeights per step
  Trajectory trajectory;        // forward pass under `weights`
  Matrix costates;              // (N + 1) x p, backward pass under `weights`
  std::vector<double> cost_trace;  // J at every evaluated iterate, k = 0, 1, ...
  double cost = 0.0;            // J of the reported iterate
  std::size_t best_iteration = 0;
  bool converged = false;
  std::size_t iterations_used = 0;
  double max_membership = 0.0;  // largest (w - c)^T S^-1 (w - c) over all iterates
  std::vector<WeightSequence> iterates;  // filled when record_iterates is set
};

// Sum of c(x_n) for n = 1..N; the initial state is not charged.
inline double trajectory_cost(const CostFunction& cost, const Trajectory& traj) {
  double total = 0.0;
  for (Eigen::Index n = 1; n <= traj.horizon(); ++n) total += cost.value(traj.state(n));
  return total;
}

namespace detail {

inline double signed_value(const CostFunction& cost, const Vector& x, Direction dir) {
  const double c = cost.value(x);
  return dir == Direction::worst ? -c : c;
}

inline Vector signed_gradient(const CostFunction& cost, const Vector& x, Direction dir) {
  Vector g = cost.gradient(x);
  if (dir == Direction::worst) g = -g;
  return g;
}

inline double max_membership(const UrfModel& model, const WeightSequence& weights) {
  double worst = 0.0;
  for (const auto& step : weights) {
    for (std::size_t d = 0; d < step.size(); ++d) {
      worst = std::max(worst, model.sets()[d].quadratic_form(step[d]));
    }
  }
  return worst;
}

}  // namespace detail

// H = c_hat(x) + p_next^T (h(x) + f(x, W)); c_hat = -c for the worst case.
inline double hamiltonian(const UrfModel& model, const CostFunction& cost, const Vector& x,
                          const Vector& p_next, const DimWeights& w, Direction direction) {
  detail::require_dim(p_next.size(), model.state_dim(), "hamiltonian co-state");
  return detail::signed_value(cost, x, direction) + p_next.dot(step_with_weights(model, x, w));
}

// argmin over the ellipsoid of (phi p)^T w: c - S g / sqrt(g^T S g).
inline Vector minimize_hamiltonian_step(const UncertaintySet& set, const Vector& feature_vec,
                                        double p_scalar) {
  detail::require_dim(feature_vec.size(), set.dim(), "minimize_hamiltonian_step features");
  detail::require(feature_vec.allFinite() && std::isfinite(p_scalar),
                  "minimize_hamiltonian_step: non-finite inputs");
  if (set.is_singleton()) return set.center();
  const Vector g = feature_vec * p_scalar;
  const Vector half = set.shape_factor().transpose() * g;  // F^T g, S = F F^T
  const double norm = half.norm();
  if (norm < 1e-14) return set.center();
  return set.center() - set.shape_factor() * (half / norm);
}

inline void check_cost(const UrfModel& model, const CostFunction& cost) {
  detail::require(cost.value && cost.gradient, "cost function callbacks must be set");
  detail::require_dim(cost.dim, model.state_dim(), "cost function");
}

// p_N = grad c_hat(x_N); p_n = grad c_hat(x_n) + J_n^T p_{n+1}, where J_n is
// the full transition Jacobian (nominal included) under w_n.
inline Matrix backward_pass(const UrfModel& model, const CostFunction& cost, const Trajectory& traj,
                            const WeightSequence& weights, Direction direction) {
  check_cost(model, cost);
  const auto horizon = static_cast<Eigen::Index>(weights.size());
  detail::require_dim(traj.horizon(), horizon, "backward_pass trajectory horizon");
  const Trajectory replay = rollout(model, traj.state(0), weights);
  const double mismatch = (replay.states - traj.states).cwiseAbs().maxCoeff();
  if (!(mismatch <= 1e-9)) {
    throw ValidationError(detail::concat("backward_pass: trajectory is not the forward pass of the "
                                         "given weights (max deviation ", mismatch, ")"));
  }
  Matrix costates(horizon + 1, model.state_dim());
  Vector p = detail::signed_gradient(cost, traj.state(horizon), direction);
  costates.row(horizon) = p.transpose();
  for (Eigen::Index n = horizon - 1; n >= 0; --n) {
    const Vector x = traj.state(n);
    const Matrix jac = transition_jacobian(model, x, weights[static_cast<std::size_t>(n)]);
    p = detail::signed_gradient(cost, x, direction) + jac.transpose() * p;
    costates.row(n) = p.transpose();
  }
  return costates;
}

// d J_hat / d w_{n,d} = phi(x_n) p_{n+1,d}.
inline WeightSequence weight_gradients(const UrfModel& model, const Trajectory& traj,
                                       const Matrix& costates) {
  WeightSequence grads;
  const Eigen::Index horizon = traj.horizon();
  grads.reserve(static_cast<std::size_t>(horizon));
  for (Eigen::Index n = 0; n < horizon; ++n) {
    const Vector phi = model.features().evaluate(traj.state(n));
    DimWeights g;
    for (Eigen::Index d = 0; d < model.state_dim(); ++d) g.push_back(phi * costates(n + 1, d));
    grads.push_back(std::move(g));
  }
  return grads;
}

// Per-step, per-dimension Hamiltonian minimizers for the current pass.
inline WeightSequence hamiltonian_minimizers(const UrfModel& model, const Trajectory& traj,
                                             const Matrix& costates) {
  WeightSequence out;
  const Eigen::Index horizon = traj.horizon();
  out.reserve(static_cast<std::size_t>(horizon));
  for (Eigen::Index n = 0; n < horizon; ++n) {
    const Vector phi = model.features().evaluate(traj.state(n));
    DimWeights wn;
    for (Eigen::Index d = 0; d < model.state_dim(); ++d) {
      wn.push_back(minimize_hamiltonian_step(model.sets()[static_cast<std::size_t>(d)], phi,
                                             costates(n + 1, d)));
    }
    out.push_back(std::move(wn));
  }
  return out;
}

namespace detail {

struct Incumbent {
  double cost = 0.0;
  std::size_t iteration = 0;
  WeightSequence weights;
  Trajectory trajectory;
  bool set = false;

  void offer(double j, std::size_t k, const WeightSequence& w, const Trajectory& t, Direction dir) {
    const bool better = !set || (dir == Direction::worst ? j > cost : j < cost);
    if (!better) return;
    cost = j;
    iteration = k;
    weights = w;
    trajectory = t;
    set = true;
  }
};

template <typename Update>
WorstCaseResult run_shooting(const UrfModel& model, const CostFunction& cost,
                             const SolverConfig& config, Update&& update) {
  check_cost(model, cost);
  config.validate(model);
  WorstCaseResult result;
  WeightSequence weights(config.horizon, model.mean_weights());
  Incumbent incumbent;
  result.max_membership = max_membership(model, weights);
  for (std::size_t k = 0;; ++k) {
    Trajectory traj;
    try {
      traj = rollout(model, config.x0, weights);
    } catch (const DivergenceError& e) {
      throw DivergenceError(concat("solver iteration ", k, ": ", e.what()), e.step());
    }
    const double j = trajectory_cost(cost, traj);
    result.cost_trace.push_back(j);
    if (config.record_iterates) result.iterates.push_back(weights);
    incumbent.offer(j, k, weights, traj, config.direction);
    result.iterations_used = k;
    if (k > 0 && std::abs(j - result.cost_trace[k - 1]) < config.tol) {
      result.converged = true;
      break;
    }
    if (k == config.outer_iterations) break;
    const Matrix costates = backward_pass(model, cost, traj, weights, config.direction);
    const WeightSequence targets = hamiltonian_minimizers(model, traj, costates);
    update(weights, targets, k);
    result.max_membership = std::max(result.max_membership, max_membership(model, weights));
  }
  result.weights = std::move(incumbent.weights);
  result.trajectory = std::move(incumbent.trajectory);
  result.cost = incumbent.cost;
  result.best_iteration = incumbent.iteration;
  result.costates = backward_pass(model, cost, result.trajectory, result.weights, config.direction);
  return result;
}

}  // namespace detail

// Inexact PMP: w+ = w + gamma_k (w_bar - w), i.e. Frank-Wolfe on J_hat.
// The reported weights are the iterate with the most extreme J seen in the
// requested direction; `cost_trace` keeps every iterate's J.
inline WorstCaseResult solve(const UrfModel& model, const CostFunction& cost,
                             const SolverConfig& config) {
  return detail::run_shooting(
      model, cost, config, [&](WeightSequence& w, const WeightSequence& target, std::size_t k) {
        const double gamma = step_size(config.schedule, k, config.outer_iterations);
        for (std::size_t n = 0; n < w.size(); ++n) {
          for (std::size_t d = 0; d < w[n].size(); ++d) {
            w[n][d] += gamma * (target[n][d] - w[n][d]);
          }
        }
      });
}

// Exact PMP: every w_n is replaced by its Hamiltonian minimizer. The
// schedule field of the config is ignored.
inline WorstCaseResult solve_exact_pmp(const UrfModel& model, const CostFunction& cost,
                                       const SolverConfig& config) {
  return detail::run_shooting(model, cost, config,
                              [](WeightSequence& w, const WeightSequence& target, std::size_t) {
                                w = target;
                              });
}

struct CostBounds {
  double best = 0.0;
  double mean = 0.0;
  double worst = 0.0;
  WorstCaseResult best_result;
  WorstCaseResult worst_result;
  Trajectory mean_trajectory;
};

inline CostBounds cost_bounds(const UrfModel& model, const CostFunction& cost,
                              const SolverConfig& config) {
  config.validate(model);
  CostBounds out;
  out.mean_trajectory = rollout_mean(model, config.x0, static_cast<Eigen::Index>(config.horizon));
  out.mean = trajectory_cost(cost, out.mean_trajectory);
  SolverConfig worst_cfg = config;
  worst_cfg.direction = Direction::worst;
  SolverConfig best_cfg = config;
  best_cfg.direction = Direction::best;
  out.worst_result = solve(model, cost, worst_cfg);
  out.best_result = solve(model, cost, best_cfg);
  out.worst = out.worst_result.cost;
  out.best = out.best_result.cost;
  constexpr double tol = 1e-9;
  if (!(out.best <= out.mean + tol && out.mean <= out.worst + tol)) {
    throw NumericalError(detail::concat("cost_bounds: ordering violated (best ", out.best, ", mean ",
                                        out.mean, ", worst ", out.worst, ")"));
  }
  return out;
}

inline nlohmann::json to_json(const WorstCaseResult& r, const SolverConfig& config) {
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& step : r.weights) {
    nlohmann::json dims = nlohmann::json::array();
    for (const auto& wd : step) dims.push_back(detail::to_std(wd));
    weights.push_back(std::move(dims));
  }
  return {{"config",
           {{"direction", to_string(config.direction)},
            {"horizon", config.horizon},
            {"outer_iterations", config.outer_iterations},
            {"schedule", to_string(config.schedule)},
            {"tol", config.tol},
            {"x0", detail::to_std(config.x0)}}},
          {"cost", r.cost},
          {"best_iteration", r.best_iteration},
          {"converged", r.converged},
          {"iterations_used", r.iterations_used},
          {"max_membership", r.max_membership},
          {"cost_trace", r.cost_trace},
          {"costates", detail::flatten(r.costates)},
          {"costate_dims", {r.costates.rows(), r.costates.cols()}},
          {"weights", std::move(weights)}};
}

}  // namespace urf
