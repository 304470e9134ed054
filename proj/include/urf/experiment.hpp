#pragma once

// Configuration-driven experiment pipeline behind the `urf` command line:
// generate -> fit -> predict / worstcase, and sweeps over one axis.

#include <urf/io.hpp>
#include <urf/systems.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace urf {

struct PcaSettings {
  bool enabled = true;
  std::size_t reduced_dim = 50;
};

struct SolverSettings {
  std::size_t horizon = 50;
  std::size_t outer_iterations = 200;
  StepSchedule schedule = StepSchedule::fw_standard;  // used for costs.json
  std::vector<StepSchedule> schedules{StepSchedule::fw_standard, StepSchedule::full_step,
                                      StepSchedule::constant};
  double tol = 1e-8;
  Vector x0;  // native system coordinates
  bool exact_pmp_trace = true;
};

struct TubeSettings {
  std::size_t num_samples = 30;
  TubeMode mode = TubeMode::fixed_weight;
};

struct SweepSettings {
  std::string axis = "num_rollouts";
  nlohmann::json values = nlohmann::json::array({5, 25, 100, 200});
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct ExperimentConfig {
  SystemKind system = SystemKind::van_der_pol;
  std::uint64_t spiral_seed = 9;
  IntegratorSpec integrator = default_integrator(SystemKind::van_der_pol);
  std::size_t num_rollouts = 5;
  std::size_t rollout_length = 50;
  double noise_std = 0.01;
  std::optional<double> fit_noise_std;  // defaults to noise_std
  FeatureKind feature_kind = FeatureKind::fourier;
  std::size_t feature_count = 200;
  double lengthscale = 1.0;
  PcaSettings pca;
  double alpha = 0.95;
  bool certainty_equivalent = false;
  CostKind cost = CostKind::quadratic;
  SolverSettings solver;
  TubeSettings tube;
  SweepSettings sweep;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  // Values the literature leaves open that this run took from built-in defaults.
  std::vector<std::string> unvalidated_defaults;

  ReferenceSystem reference_system() const {
    switch (system) {
      case SystemKind::source_spiral: return ReferenceSystem::source_spiral(spiral_seed);
      case SystemKind::van_der_pol: return ReferenceSystem::van_der_pol();
      case SystemKind::damped_pendulum: return ReferenceSystem::damped_pendulum();
    }
    return ReferenceSystem::van_der_pol();
  }

  Eigen::Index model_dim() const { return reference_system().model_dim(); }

  RolloutConfig rollout_config() const {
    return RolloutConfig{num_rollouts, rollout_length, noise_std, mix_seed(seed, 1)};
  }

  FeatureSpec feature_spec() const {
    return FeatureSpec{feature_kind, feature_count, static_cast<std::size_t>(model_dim()), lengthscale,
                       mix_seed(seed, 2)};
  }

  std::uint64_t tube_seed() const { return mix_seed(seed, 3); }

  double regression_noise_std() const { return fit_noise_std.value_or(noise_std); }

  Vector model_x0() const { return to_model_coordinates(reference_system(), solver.x0); }

  SolverConfig solver_config(Direction direction, StepSchedule schedule) const {
    SolverConfig cfg;
    cfg.direction = direction;
    cfg.horizon = solver.horizon;
    cfg.outer_iterations = solver.outer_iterations;
    cfg.schedule = schedule;
    cfg.tol = solver.tol;
    cfg.x0 = model_x0();
    return cfg;
  }

  void validate() const {
    check_integrator(reference_system(), integrator);
    rollout_config().validate();
    feature_spec().validate();
    detail::require(std::isfinite(regression_noise_std()) && regression_noise_std() > 0.0,
                    "regression.noise_std: must be positive (set it explicitly when rollouts.noise_std is 0)");
    if (pca.enabled) {
      detail::require(pca.reduced_dim >= 1 && pca.reduced_dim < feature_count,
                      "pca.reduced_dim: must satisfy 1 <= reduced_dim < features.count");
    }
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha_w: must lie in (0, 1)");
    detail::require(solver.horizon >= 1, "solver.horizon: must be >= 1");
    detail::require(solver.outer_iterations >= 1, "solver.outer_iterations: must be >= 1");
    detail::require(std::isfinite(solver.tol) && solver.tol >= 0.0, "solver.tol: must be >= 0");
    detail::require_dim(solver.x0.size(), 2, "solver.x0");
    detail::require(tube.num_samples >= 1, "tube.num_samples: must be >= 1");
    if (cost == CostKind::pendulum_upright) {
      detail::require(system == SystemKind::damped_pendulum, "cost: pendulum-upright requires damped_pendulum");
    }
  }
};

inline Vector default_x0(SystemKind kind) {
  Vector x0(2);
  switch (kind) {
    case SystemKind::source_spiral: x0 << 0.5, -0.5; break;
    case SystemKind::van_der_pol: x0 << 0.5, 0.5; break;
    case SystemKind::damped_pendulum: x0 << 1.0, 0.0; break;
  }
  return x0;
}

namespace detail {

template <typename T>
T take(const nlohmann::json& obj, const char* key, T fallback, const char* flag,
       std::vector<std::string>* defaulted) {
  if (obj.is_object() && obj.contains(key)) {
    try {
      return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(concat("config field '", flag, "': ", e.what()));
    }
  }
  if (defaulted) defaulted->push_back(flag);
  return fallback;
}

inline const nlohmann::json& section(const nlohmann::json& root, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!root.contains(key)) return empty;
  const auto& s = root.at(key);
  require(s.is_object(), concat("config section '", key, "' must be an object"));
  return s;
}

}  // namespace detail

// Accepts either a bare config document or a run manifest (its "config" block).
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  const nlohmann::json& root = doc.contains("manifest_version") ? doc.at("config") : doc;
  detail::require(root.is_object(), "config: top level must be a JSON object");
  ExperimentConfig cfg;
  auto* flagged = &cfg.unvalidated_defaults;
  using detail::section;
  using detail::take;

  const auto& sys = section(root, "system");
  cfg.system = parse_system_kind(take<std::string>(sys, "kind", "van_der_pol", "system.kind", nullptr));
  cfg.spiral_seed = take<std::uint64_t>(sys, "spiral_seed", 9, "system.spiral_seed", nullptr);

  const auto& integ = section(root, "integrator");
  const auto fallback = default_integrator(cfg.system);
  cfg.integrator.method =
      parse_integrator(take<std::string>(integ, "method", std::string(to_string(fallback.method)), "integrator.method", nullptr));
  cfg.integrator.dt = take<double>(integ, "dt", fallback.dt, "integrator.dt",
                                   cfg.system == SystemKind::source_spiral ? nullptr : flagged);

  const auto& roll = section(root, "rollouts");
  cfg.num_rollouts = take<std::size_t>(roll, "num_rollouts", 5, "rollouts.num_rollouts", nullptr);
  cfg.rollout_length = take<std::size_t>(roll, "length", 50, "rollouts.length", nullptr);
  cfg.noise_std = take<double>(roll, "noise_std", 0.01, "rollouts.noise_std", flagged);

  const auto& reg = section(root, "regression");
  if (reg.contains("noise_std")) cfg.fit_noise_std = take<double>(reg, "noise_std", 0.0, "regression.noise_std", nullptr);

  const auto& feat = section(root, "features");
  cfg.feature_kind = parse_feature_kind(take<std::string>(feat, "kind", "fourier", "features.kind", nullptr));
  cfg.feature_count = take<std::size_t>(feat, "count", 200, "features.count", nullptr);
  cfg.lengthscale = take<double>(feat, "lengthscale", 1.0, "features.lengthscale", flagged);

  const auto& pca = section(root, "pca");
  cfg.pca.enabled = take<bool>(pca, "enabled", true, "pca.enabled", nullptr);
  cfg.pca.reduced_dim = take<std::size_t>(pca, "reduced_dim", 50, "pca.reduced_dim", nullptr);

  cfg.alpha = take<double>(root, "alpha_w", 0.95, "alpha_w", flagged);
  cfg.certainty_equivalent = take<bool>(root, "certainty_equivalent", false, "certainty_equivalent", nullptr);
  cfg.cost = parse_cost_kind(
      take<std::string>(root, "cost", std::string(to_string(default_cost(cfg.system))), "cost", nullptr));

  const auto& solver = section(root, "solver");
  cfg.solver.horizon = take<std::size_t>(solver, "horizon", 50, "solver.horizon", nullptr);
  cfg.solver.outer_iterations = take<std::size_t>(solver, "outer_iterations", 200, "solver.outer_iterations", flagged);
  cfg.solver.tol = take<double>(solver, "tol", 1e-8, "solver.tol", flagged);
  cfg.solver.schedule = parse_schedule(take<std::string>(solver, "schedule", "fw_standard", "solver.schedule", nullptr));
  if (solver.contains("schedules")) {
    cfg.solver.schedules.clear();
    for (const auto& name : solver.at("schedules")) cfg.solver.schedules.push_back(parse_schedule(name.get<std::string>()));
  }
  const auto x0 = take<std::vector<double>>(solver, "x0", detail::to_std(default_x0(cfg.system)), "solver.x0", nullptr);
  cfg.solver.x0 = detail::to_vector(x0);
  cfg.solver.exact_pmp_trace = take<bool>(solver, "exact_pmp_trace", true, "solver.exact_pmp_trace", nullptr);

  const auto& tube = section(root, "tube");
  cfg.tube.num_samples = take<std::size_t>(tube, "num_samples", 30, "tube.num_samples", nullptr);
  cfg.tube.mode = parse_tube_mode(take<std::string>(tube, "mode", "fixed-weight", "tube.mode", nullptr));

  const auto& sweep = section(root, "sweep");
  cfg.sweep.axis = take<std::string>(sweep, "axis", "num_rollouts", "sweep.axis", nullptr);
  if (sweep.contains("values")) cfg.sweep.values = sweep.at("values");
  cfg.sweep.seeds = take<std::vector<std::uint64_t>>(sweep, "seeds", {0, 1, 2}, "sweep.seeds", nullptr);

  cfg.output_dir = take<std::string>(root, "output_dir", "out", "output_dir", nullptr);
  cfg.seed = take<std::uint64_t>(root, "seed", 0, "seed", nullptr);
  // A replayed manifest keeps the provenance of the run that produced it.
  if (&root != &doc && doc.contains("flagged_defaults")) {
    for (const auto& [key, value] : doc.at("flagged_defaults").items()) flagged->push_back(key);
  }
  std::sort(flagged->begin(), flagged->end());
  flagged->erase(std::unique(flagged->begin(), flagged->end()), flagged->end());
  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json schedules = nlohmann::json::array();
  for (auto s : cfg.solver.schedules) schedules.push_back(to_string(s));
  nlohmann::json j{
      {"system", {{"kind", to_string(cfg.system)}, {"spiral_seed", cfg.spiral_seed}}},
      {"integrator", {{"method", to_string(cfg.integrator.method)}, {"dt", cfg.integrator.dt}}},
      {"rollouts", {{"num_rollouts", cfg.num_rollouts}, {"length", cfg.rollout_length}, {"noise_std", cfg.noise_std}}},
      {"features", {{"kind", to_string(cfg.feature_kind)}, {"count", cfg.feature_count}, {"lengthscale", cfg.lengthscale}}},
      {"pca", {{"enabled", cfg.pca.enabled}, {"reduced_dim", cfg.pca.reduced_dim}}},
      {"alpha_w", cfg.alpha},
      {"certainty_equivalent", cfg.certainty_equivalent},
      {"cost", to_string(cfg.cost)},
      {"solver",
       {{"horizon", cfg.solver.horizon},
        {"outer_iterations", cfg.solver.outer_iterations},
        {"tol", cfg.solver.tol},
        {"schedule", to_string(cfg.solver.schedule)},
        {"schedules", schedules},
        {"x0", detail::to_std(cfg.solver.x0)},
        {"exact_pmp_trace", cfg.solver.exact_pmp_trace}}},
      {"tube", {{"num_samples", cfg.tube.num_samples}, {"mode", to_string(cfg.tube.mode)}}},
      {"sweep", {{"axis", cfg.sweep.axis}, {"values", cfg.sweep.values}, {"seeds", cfg.sweep.seeds}}},
      {"output_dir", cfg.output_dir},
      {"seed", cfg.seed}};
  if (cfg.fit_noise_std) j["regression"] = {{"noise_std", *cfg.fit_noise_std}};
  return j;
}

inline nlohmann::json manifest(const ExperimentConfig& cfg, const std::string& command, const io::OutputSet& out) {
  nlohmann::json flagged = nlohmann::json::object();
  const nlohmann::json echo = to_json(cfg);
  for (const auto& key : cfg.unvalidated_defaults) {
    nlohmann::json::json_pointer ptr("/" + [&] {
      std::string p = key;
      for (auto& ch : p) if (ch == '.') ch = '/';
      return p;
    }());
    flagged[key] = {{"value", echo.at(ptr)}, {"provenance", "default-unvalidated"}};
  }
  return {{"manifest_version", 1},
          {"command", command},
          {"config", echo},
          {"seeds",
           {{"global", cfg.seed},
            {"rollouts", cfg.rollout_config().seed},
            {"features", cfg.feature_spec().seed},
            {"tube", cfg.tube_seed()},
            {"spiral", cfg.spiral_seed}}},
          {"flagged_defaults", flagged},
          {"files", out.hashes()}};
}

inline void log_line(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

// --- generate -----------------------------------------------------------------

inline GeneratedData run_generate(const ExperimentConfig& cfg, const io::fs::path& out_dir) {
  cfg.validate();
  const auto sys = cfg.reference_system();
  const auto data = generate_dataset(sys, cfg.integrator, cfg.rollout_config());
  io::OutputSet out(out_dir);
  out.write("dataset.csv", io::dataset_csv(data.inputs, data.successors));
  for (std::size_t r = 0; r < data.rollouts.size(); ++r) {
    char name[64];
    std::snprintf(name, sizeof(name), "rollouts/rollout_%03zu.csv", r);
    out.write(name, io::trajectory_csv(data.rollouts[r]));
  }
  io::write_text(out_dir / "manifest.json", io::dump_json(manifest(cfg, "generate", out)));
  return data;
}

// --- fit ------------------------------------------------------------------------

struct FitReport {
  std::optional<double> retained_energy;
  std::size_t feature_dim = 0;
  std::vector<double> condition_numbers;  // of each per-dimension posterior covariance
};

inline std::pair<UrfModel, FitReport> fit_model(const ExperimentConfig& cfg, const Matrix& inputs,
                                                 const Matrix& successors) {
  cfg.validate();
  const auto nominal = NominalModel::identity(cfg.model_dim());
  FeatureMap features = build_feature_map(cfg.feature_spec());
  FitReport report;
  if (cfg.pca.enabled) {
    auto fit = fit_pca_projection(features, inputs, cfg.pca.reduced_dim);
    report.retained_energy = fit.retained_energy();
    features = std::move(fit.map);
  }
  GeneratedData data{inputs, successors, {}, cfg.noise_std};
  auto model = fit_urf_model(nominal, features, data.residuals(nominal, cfg.regression_noise_std()),
                             FitOptions{cfg.alpha, cfg.certainty_equivalent});
  report.feature_dim = features.output_dim();
  for (const auto& post : model.posteriors()) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(post.covariance(), Eigen::EigenvaluesOnly);
    report.condition_numbers.push_back(eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff());
  }
  return {std::move(model), std::move(report)};
}

inline UrfModel run_fit(const ExperimentConfig& cfg, const io::fs::path& out_dir,
                        std::optional<io::fs::path> dataset_path = std::nullopt) {
  const auto path = dataset_path.value_or(out_dir / "dataset.csv");
  const auto table = io::parse_dataset_csv(io::read_text(path), cfg.model_dim(), path.string());
  auto [model, report] = fit_model(cfg, table.inputs, table.successors);
  io::OutputSet out(out_dir);
  out.write_json("model.json", to_json(model));
  nlohmann::json rep{{"feature_dim", report.feature_dim},
                     {"data_count", table.inputs.rows()},
                     {"condition_numbers", report.condition_numbers}};
  if (report.retained_energy) rep["pca_retained_energy"] = *report.retained_energy;
  out.write_json("fit_report.json", rep);
  io::write_text(out_dir / "manifest_fit.json", io::dump_json(manifest(cfg, "fit", out)));
  if (report.retained_energy) log_line(detail::concat("fit: PCA retained energy ", *report.retained_energy));
  for (std::size_t d = 0; d < report.condition_numbers.size(); ++d) {
    log_line(detail::concat("fit: posterior ", d, " covariance condition number ", report.condition_numbers[d]));
  }
  return model;
}

inline UrfModel load_model(const io::fs::path& path) {
  try {
    return urf_model_from_json(io::read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(detail::concat("'", path.string(), "': malformed model bundle: ", e.what()));
  }
}

// --- predict -------------------------------------------------------------------

inline void write_tube(io::OutputSet& out, const std::vector<Trajectory>& tube) {
  for (std::size_t s = 0; s < tube.size(); ++s) {
    char name[64];
    std::snprintf(name, sizeof(name), "tube/sample_%03zu.csv", s);
    out.write(name, io::trajectory_csv(tube[s]));
  }
}

inline void run_predict(const ExperimentConfig& cfg, const io::fs::path& out_dir,
                        std::optional<io::fs::path> model_path = std::nullopt) {
  cfg.validate();
  const auto model = load_model(model_path.value_or(out_dir / "model.json"));
  const auto horizon = static_cast<Eigen::Index>(cfg.solver.horizon);
  const Vector x0 = cfg.model_x0();
  io::OutputSet out(out_dir / "predict");
  out.write("trajectory_mean.csv", io::trajectory_csv(rollout_mean(model, x0, horizon)));
  out.write("trajectory_true.csv",
            io::trajectory_csv(simulate(cfg.reference_system(), cfg.integrator, cfg.solver.x0, horizon)));
  write_tube(out, sample_uncertainty_tube(model, x0, horizon, cfg.tube.num_samples, cfg.tube.mode, cfg.tube_seed()));
  io::write_text(out.root() / "manifest.json", io::dump_json(manifest(cfg, "predict", out)));
}

// --- worstcase -----------------------------------------------------------------

struct WorstCaseSummary {
  double best = 0.0;
  double mean = 0.0;
  double worst = 0.0;
  double truth = 0.0;
  double max_membership = 0.0;
  std::vector<std::pair<StepSchedule, WorstCaseResult>> schedule_runs;
};

inline std::string trace_csv(const std::vector<double>& trace) {
  std::string s = io::csv_row({"iteration", "J"});
  for (std::size_t k = 0; k < trace.size(); ++k) s += io::csv_row({std::to_string(k), io::format_double(trace[k])});
  return s;
}

inline WorstCaseSummary worstcase_analysis(const ExperimentConfig& cfg, const UrfModel& model,
                                           io::OutputSet* out) {
  cfg.validate();
  const auto cost = stage_cost(cfg.cost, model.state_dim());
  const auto sys = cfg.reference_system();
  const auto horizon = static_cast<Eigen::Index>(cfg.solver.horizon);
  WorstCaseSummary summary;
  const auto bounds = cost_bounds(model, cost, cfg.solver_config(Direction::worst, cfg.solver.schedule));
  summary.best = bounds.best;
  summary.mean = bounds.mean;
  summary.worst = bounds.worst;
  summary.max_membership = std::max(bounds.worst_result.max_membership, bounds.best_result.max_membership);
  const auto truth = simulate(sys, cfg.integrator, cfg.solver.x0, horizon);
  summary.truth = trajectory_cost(cost, truth);
  for (auto schedule : cfg.solver.schedules) {
    auto result = schedule == cfg.solver.schedule ? bounds.worst_result
                                                  : solve(model, cost, cfg.solver_config(Direction::worst, schedule));
    summary.max_membership = std::max(summary.max_membership, result.max_membership);
    summary.schedule_runs.emplace_back(schedule, std::move(result));
  }
  if (!out) return summary;
  const auto worst_cfg = cfg.solver_config(Direction::worst, cfg.solver.schedule);
  std::optional<WorstCaseResult> exact;
  if (cfg.solver.exact_pmp_trace) {
    exact = solve_exact_pmp(model, cost, worst_cfg);
    summary.max_membership = std::max(summary.max_membership, exact->max_membership);
  }

  out->write_json("costs.json", {{"best", summary.best},
                                 {"mean", summary.mean},
                                 {"worst", summary.worst},
                                 {"true", summary.truth},
                                 {"schedule", to_string(cfg.solver.schedule)},
                                 {"max_membership", summary.max_membership}});
  out->write("trajectory_mean.csv", io::trajectory_csv(bounds.mean_trajectory));
  out->write("trajectory_worst.csv", io::trajectory_csv(bounds.worst_result.trajectory));
  out->write("trajectory_best.csv", io::trajectory_csv(bounds.best_result.trajectory));
  out->write("trajectory_true.csv", io::trajectory_csv(truth));
  out->write_json("result_worst.json", to_json(bounds.worst_result, worst_cfg));
  out->write_json("result_best.json", to_json(bounds.best_result, cfg.solver_config(Direction::best, cfg.solver.schedule)));
  for (const auto& [schedule, result] : summary.schedule_runs) {
    const std::string name(to_string(schedule));
    out->write("trace_" + name + ".csv", trace_csv(result.cost_trace));
    out->write("trajectory_worst_" + name + ".csv", io::trajectory_csv(result.trajectory));
  }
  out->write("trace_best.csv", trace_csv(bounds.best_result.cost_trace));
  if (exact) out->write("trace_exact_pmp.csv", trace_csv(exact->cost_trace));
  write_tube(*out, sample_uncertainty_tube(model, cfg.model_x0(), horizon, cfg.tube.num_samples, cfg.tube.mode,
                                           cfg.tube_seed()));
  return summary;
}

inline WorstCaseSummary run_worstcase(const ExperimentConfig& cfg, const io::fs::path& out_dir,
                                      std::optional<io::fs::path> model_path = std::nullopt) {
  const auto model = load_model(model_path.value_or(out_dir / "model.json"));
  io::OutputSet out(out_dir / "worstcase");
  auto summary = worstcase_analysis(cfg, model, &out);
  io::write_text(out.root() / "manifest.json", io::dump_json(manifest(cfg, "worstcase", out)));
  return summary;
}

// --- sweep ---------------------------------------------------------------------

struct SweepCell {
  std::string axis_value;
  std::uint64_t seed = 0;
  WorstCaseSummary summary;
};

inline ExperimentConfig sweep_cell_config(const ExperimentConfig& base, const std::string& axis,
                                          const nlohmann::json& value, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.seed = seed;
  if (axis == "num_rollouts") {
    cfg.num_rollouts = value.get<std::size_t>();
  } else if (axis == "alpha") {
    cfg.alpha = value.get<double>();
  } else if (axis == "schedule") {
    cfg.solver.schedule = parse_schedule(value.get<std::string>());
    cfg.solver.schedules = {cfg.solver.schedule};
  } else {
    throw ValidationError(detail::concat("sweep.axis: unknown axis '", axis,
                                         "' (expected num_rollouts, alpha or schedule)"));
  }
  cfg.validate();
  return cfg;
}

inline std::string axis_label(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) return io::format_double(value.get<double>());
  return value.dump();
}

// Runs generate/fit/worstcase for every (value, seed) cell. Cells are
// independent and write into their own directories.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const io::fs::path& out_dir,
                                        std::size_t jobs = 1) {
  const auto& axis = base.sweep.axis;
  detail::require(base.sweep.values.is_array() && !base.sweep.values.empty(), "sweep.values: must be a non-empty array");
  detail::require(!base.sweep.seeds.empty(), "sweep.seeds: must be non-empty");
  struct Task {
    ExperimentConfig cfg;
    std::string label;
    io::fs::path dir;
  };
  std::vector<Task> tasks;
  for (const auto& value : base.sweep.values) {
    for (auto seed : base.sweep.seeds) {
      auto cfg = sweep_cell_config(base, axis, value, seed);
      const std::string label = axis_label(value);
      tasks.push_back({cfg, label, out_dir / "cells" / (axis + "_" + label + "_seed_" + std::to_string(seed))});
    }
  }
  std::vector<SweepCell> cells(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const auto& t = tasks[i];
        run_generate(t.cfg, t.dir);
        run_fit(t.cfg, t.dir);
        cells[i] = SweepCell{t.label, t.cfg.seed, run_worstcase(t.cfg, t.dir)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string csv = io::csv_row({"axis_value", "seed", "best", "mean", "worst", "true", "interval_width"});
  for (const auto& c : cells) {
    csv += io::csv_row({c.axis_value, std::to_string(c.seed), io::format_double(c.summary.best),
                        io::format_double(c.summary.mean), io::format_double(c.summary.worst),
                        io::format_double(c.summary.truth), io::format_double(c.summary.worst - c.summary.best)});
  }
  io::OutputSet out(out_dir);
  out.write("sweep.csv", csv);
  io::write_text(out_dir / "manifest_sweep.json", io::dump_json(manifest(base, "sweep", out)));
  return cells;
}

}  // namespace urf
