// Acceptance harness: one PASS/FAIL line per criterion.
//
// Every criterion reads its parameters from a manifest (written on the first
// pass, re-read on the second) and writes its numeric results to files. The
// whole suite runs twice and the two output trees must match byte for byte.
//
// usage: acceptance [output_dir] [config_dir]

#include <urf/experiment.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>

#include "test_support.hpp"

namespace {

using namespace urf;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef URF_CONFIG_DIR
#define URF_CONFIG_DIR "configs"
#endif

struct Outcome {
  bool pass = false;
  std::string detail;
  json results;
  std::size_t violations = 0;  // weight iterates outside their ellipsoid
};

struct Criterion {
  int id;
  std::string title;
  double time_limit_s;
  std::function<json()> default_params;
  std::function<Outcome(const json&, const fs::path&)> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

constexpr double kMembershipSlack = 1e-10;

// ---------------------------------------------------------------------------

Outcome kernel_approximation(const json& p, const fs::path&) {
  const auto features = p.at("features").get<std::size_t>();
  const double l = p.at("lengthscale").get<double>();
  const auto pairs = p.at("pairs").get<int>();
  json per_seed = json::array();
  double total = 0.0;
  for (auto seed : p.at("seeds").get<std::vector<std::uint64_t>>()) {
    const auto map = build_feature_map(FeatureSpec{FeatureKind::fourier, features, 2, l, seed});
    Rng rng(mix_seed(seed, 100));
    double err = 0.0;
    for (int i = 0; i < pairs; ++i) {
      const Vector x = rng.normal_vector(2);
      const Vector y = rng.normal_vector(2);
      const double exact = std::exp(-(x - y).squaredNorm() / (2.0 * l * l));
      err += std::abs(map.evaluate(x).dot(map.evaluate(y)) - exact);
    }
    per_seed.push_back(err / pairs);
    total += err / pairs;
  }
  const double mae = total / static_cast<double>(per_seed.size());
  return {mae <= 0.05, "mean abs error " + fmt(mae) + " (limit 0.05)", {{"per_seed_mae", per_seed}, {"mae", mae}}};
}

Outcome blr_oracle(const json& p, const fs::path&) {
  Rng rng(p.at("seed").get<std::uint64_t>());
  double worst = 0.0;
  double worst_incremental = 0.0;
  const int instances = p.at("instances").get<int>();
  for (int i = 0; i < instances; ++i) {
    const auto t = static_cast<Eigen::Index>(2 + rng.uniform() * 98.0);
    const auto l = static_cast<Eigen::Index>(1 + rng.uniform() * 49.0);
    const Matrix phi = testing::random_matrix(rng, t, l, 0.5);
    const Vector y = testing::random_vector(rng, t);
    const double s2 = rng.uniform(0.01, 1.0);
    const auto post = fit_blr(phi, y, s2);
    // Dense oracle: explicit inverse of the precision matrix.
    const Matrix precision = phi.transpose() * phi + s2 * Matrix::Identity(l, l);
    const Matrix inv = precision.fullPivLu().inverse();
    const Vector mean = inv * phi.transpose() * y;
    const Matrix cov = s2 * inv;
    worst = std::max({worst, (post.mean() - mean).cwiseAbs().maxCoeff(),
                      (post.covariance() - cov).cwiseAbs().maxCoeff()});
    const Eigen::Index half = t / 2;
    const auto split = update_blr(fit_blr(phi.topRows(half), y.head(half), s2), phi.bottomRows(t - half),
                                  y.tail(t - half));
    worst_incremental = std::max({worst_incremental, (split.mean() - post.mean()).cwiseAbs().maxCoeff(),
                                  (split.covariance() - post.covariance()).cwiseAbs().maxCoeff()});
  }
  const bool ok = worst <= 1e-8 && worst_incremental <= 1e-8;
  return {ok, "max elementwise deviation " + fmt(worst) + ", incremental " + fmt(worst_incremental) + " (limit 1e-8)",
          {{"max_dev", worst}, {"max_dev_incremental", worst_incremental}}};
}

Outcome credible_calibration(const json& p, const fs::path&) {
  Rng rng(p.at("seed").get<std::uint64_t>());
  const auto dim = p.at("dim").get<Eigen::Index>();
  const auto post = fit_blr(testing::random_matrix(rng, 40, dim, 0.5), testing::random_vector(rng, 40), 0.1);
  const double alpha = p.at("alpha").get<double>();
  const auto set = credible_set(post, alpha);
  const int draws = p.at("samples").get<int>();
  int inside = 0;
  for (int i = 0; i < draws; ++i) {
    if (set.contains(post.mean() + post.covariance_factor() * rng.normal_vector(dim))) ++inside;
  }
  const double frac = static_cast<double>(inside) / draws;
  double quantile_err = 0.0;
  for (auto dof : p.at("dofs").get<std::vector<std::size_t>>()) {
    for (double a : p.at("levels").get<std::vector<double>>()) {
      // Root of the regularized incomplete gamma: P(k/2, q/2) = a.
      const double oracle = 2.0 * boost::math::gamma_p_inv(0.5 * static_cast<double>(dof), a);
      quantile_err = std::max(quantile_err, std::abs(chi2_quantile(dof, a) - oracle));
    }
  }
  const bool ok = frac >= 0.89 && frac <= 0.91 && quantile_err <= 1e-6;
  return {ok, "membership fraction " + fmt(frac) + " (target [0.89, 0.91]), quantile error " + fmt(quantile_err),
          {{"fraction", frac}, {"quantile_err", quantile_err}}};
}

Outcome hamiltonian_optimality(const json& p, const fs::path&) {
  Rng rng(p.at("seed").get<std::uint64_t>());
  const int instances = p.at("instances").get<int>();
  const int samples = p.at("samples").get<int>();
  double worst_gap = -std::numeric_limits<double>::infinity();
  double worst_boundary = 0.0;
  std::size_t violations = 0;
  for (int i = 0; i < instances; ++i) {
    const auto dim = static_cast<Eigen::Index>(1 + (i % 20));
    const UncertaintySet set(testing::random_vector(rng, dim), testing::random_spd(rng, dim), 0.9);
    const Vector phi = testing::random_vector(rng, dim);
    const double costate = rng.normal();
    const Vector w = minimize_hamiltonian_step(set, phi, costate);
    const Vector g = costate * phi;
    double sampled = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
      const Vector u = rng.normal_vector(dim).normalized();
      sampled = std::min(sampled, g.dot(set.center() + set.shape_factor() * u));
    }
    worst_gap = std::max(worst_gap, g.dot(w) - sampled);
    const double q = set.quadratic_form(w);
    worst_boundary = std::max(worst_boundary, std::abs(q - 1.0));
    if (q > 1.0 + kMembershipSlack) ++violations;
  }
  const bool ok = worst_gap <= 1e-9 && worst_boundary <= 1e-8;
  return {ok,
          "max(H(w*) - sampled min) " + fmt(worst_gap) + " (limit 1e-9), boundary deviation " + fmt(worst_boundary),
          {{"worst_gap", worst_gap}, {"worst_boundary", worst_boundary}},
          violations};
}

UrfModel random_projected_model(Rng& rng, Eigen::Index p, std::size_t raw, std::size_t reduced) {
  auto features = build_feature_map(
      FeatureSpec{FeatureKind::fourier, raw, static_cast<std::size_t>(p), 1.0, static_cast<std::uint64_t>(rng.uniform() * 1e9)});
  const Matrix x = testing::random_matrix(rng, 60, p);
  features = fit_pca_projection(features, x, reduced).map;
  const Matrix y = testing::random_matrix(rng, 60, p, 0.1);
  return fit_urf_model(NominalModel::identity(p), std::move(features), RegressionDataset{x, y, 0.2},
                       FitOptions{0.9, false});
}

double signed_total(const UrfModel& model, const CostFunction& cost, const Vector& x0, const WeightSequence& w,
                    Direction dir) {
  const double j = trajectory_cost(cost, rollout(model, x0, w));
  return dir == Direction::worst ? -j : j;
}

Outcome adjoint_gradient(const json& p, const fs::path&) {
  Rng rng(p.at("seed").get<std::uint64_t>());
  const double h = p.at("fd_step").get<double>();
  double worst = 0.0;
  int i = 0;
  for (const auto& shape : p.at("shapes")) {
    const auto dim = shape.at(0).get<Eigen::Index>();
    const auto reduced = shape.at(1).get<std::size_t>();
    const auto horizon = shape.at(2).get<std::size_t>();
    const auto model = random_projected_model(rng, dim, 2 * reduced, reduced);
    const auto cost = quadratic_cost(dim);
    WeightSequence weights;
    for (std::size_t n = 0; n < horizon; ++n) weights.push_back(sample_weights(model, rng));
    const Vector x0 = testing::random_vector(rng, dim, 0.5);
    const Direction dir = i % 2 ? Direction::best : Direction::worst;
    const auto traj = rollout(model, x0, weights);
    const auto grads = weight_gradients(model, traj, backward_pass(model, cost, traj, weights, dir));
    for (std::size_t n = 0; n < horizon; ++n) {
      Matrix analytic(model.feature_dim(), dim), fd(model.feature_dim(), dim);
      for (Eigen::Index d = 0; d < dim; ++d) {
        const auto du = static_cast<std::size_t>(d);
        analytic.col(d) = grads[n][du];
        for (Eigen::Index j = 0; j < model.feature_dim(); ++j) {
          auto plus = weights, minus = weights;
          plus[n][du][j] += h;
          minus[n][du][j] -= h;
          fd(j, d) = (signed_total(model, cost, x0, plus, dir) - signed_total(model, cost, x0, minus, dir)) / (2 * h);
        }
      }
      worst = std::max(worst, testing::relative_error(analytic, fd));
    }
    ++i;
  }
  return {worst <= 1e-5, "max relative error " + fmt(worst) + " (limit 1e-5)", {{"max_rel_err", worst}}};
}

Outcome frank_wolfe_equivalence(const json& p, const fs::path&) {
  Rng rng(p.at("seed").get<std::uint64_t>());
  const int instances = p.at("instances").get<int>();
  double worst = 0.0;
  std::size_t violations = 0;
  std::size_t iterates_checked = 0;
  for (int i = 0; i < instances; ++i) {
    const Eigen::Index dim = 1 + i % 3;
    const auto model = random_projected_model(rng, dim, 40, 15);
    SolverConfig cfg;
    cfg.direction = i % 2 ? Direction::best : Direction::worst;
    cfg.horizon = 15;
    cfg.outer_iterations = p.at("outer_iterations").get<std::size_t>();
    cfg.schedule = StepSchedule::full_step;
    cfg.tol = 0.0;
    cfg.x0 = testing::random_vector(rng, dim);
    cfg.record_iterates = true;
    const auto cost = quadratic_cost(dim);
    const auto fw = solve(model, cost, cfg);
    const auto exact = solve_exact_pmp(model, cost, cfg);
    if (fw.iterates.size() != exact.iterates.size()) return {false, "iterate counts differ", {}};
    for (std::size_t k = 0; k < fw.iterates.size(); ++k) {
      for (std::size_t n = 0; n < cfg.horizon; ++n) {
        for (std::size_t d = 0; d < static_cast<std::size_t>(dim); ++d) {
          worst = std::max(worst, (fw.iterates[k][n][d] - exact.iterates[k][n][d]).cwiseAbs().maxCoeff());
          for (const auto* run : {&fw, &exact}) {
            ++iterates_checked;
            if (model.sets()[d].quadratic_form(run->iterates[k][n][d]) > 1.0 + kMembershipSlack) ++violations;
          }
        }
      }
    }
  }
  return {worst <= 1e-10, "max iterate deviation " + fmt(worst) + " (limit 1e-10)",
          {{"max_dev", worst}, {"iterates_checked", iterates_checked}}, violations};
}

ExperimentConfig load_config(const json& p) { return parse_config(p); }

Outcome rollout_sweep(const json& p, const fs::path& dir) {
  const auto cfg = load_config(p);
  const auto cells = run_sweep(cfg, dir, 1);
  std::map<std::string, std::vector<double>> widths;
  std::vector<std::string> order;
  std::size_t contained = 0;
  std::size_t violations = 0;
  for (const auto& c : cells) {
    if (!widths.count(c.axis_value)) order.push_back(c.axis_value);
    widths[c.axis_value].push_back(c.summary.worst - c.summary.best);
    if (c.summary.best <= c.summary.truth && c.summary.truth <= c.summary.worst) ++contained;
    if (c.summary.max_membership > 1.0 + kMembershipSlack) ++violations;
  }
  std::vector<double> means;
  std::string trend;
  for (const auto& v : order) {
    const auto& w = widths[v];
    means.push_back(std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size()));
    trend += (trend.empty() ? "" : " -> ") + fmt(means.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] <= means[i - 1];
  const bool ok = contained == cells.size() && monotone;
  return {ok,
          std::to_string(contained) + "/" + std::to_string(cells.size()) +
              " cells with best <= true <= worst; mean width " + trend,
          {{"contained", contained}, {"cells", cells.size()}, {"mean_widths", means}},
          violations};
}

Outcome data_improves_model(const json& p, const fs::path& dir) {
  const auto base = load_config(p.at("config"));
  const auto horizon = p.at("horizon").get<Eigen::Index>();
  auto median_rmse = [&](std::size_t rollouts, json& record) {
    std::vector<double> values;
    for (auto seed : p.at("seeds").get<std::vector<std::uint64_t>>()) {
      auto cfg = base;
      cfg.num_rollouts = rollouts;
      cfg.seed = seed;
      const auto data = generate_dataset(cfg.reference_system(), cfg.integrator, cfg.rollout_config());
      const auto [model, report] = fit_model(cfg, data.inputs, data.successors);
      const auto mean = rollout_mean(model, cfg.model_x0(), horizon);
      const auto truth = simulate(cfg.reference_system(), cfg.integrator, cfg.solver.x0, horizon);
      const Matrix diff = (mean.states - truth.states).bottomRows(horizon);
      values.push_back(std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size())));
      io::write_text(dir / ("mean_rollouts_" + std::to_string(rollouts) + "_seed_" + std::to_string(seed) + ".csv"),
                     io::trajectory_csv(mean));
    }
    record[std::to_string(rollouts)] = values;
    std::sort(values.begin(), values.end());
    return values[values.size() / 2];
  };
  json per_seed;
  const double few = median_rmse(p.at("few").get<std::size_t>(), per_seed);
  const double many = median_rmse(p.at("many").get<std::size_t>(), per_seed);
  const double ratio = many / few;
  return {ratio <= 0.25, "median RMSE " + fmt(many) + " vs " + fmt(few) + ", ratio " + fmt(ratio) + " (limit 0.25)",
          {{"rmse", per_seed}, {"ratio", ratio}}};
}

std::vector<Criterion> criteria(const fs::path& config_dir) {
  const json vdp = io::read_json(config_dir / "van_der_pol.json");
  json sweep_cfg = vdp;
  sweep_cfg["sweep"] = {{"axis", "num_rollouts"}, {"values", {5, 25, 100, 200}}, {"seeds", {0, 1, 2}}};
  return {
      {1, "kernel approximation", 1.0,
       [] { return json{{"features", 1000}, {"lengthscale", 1.0}, {"pairs", 100}, {"seeds", {11, 12, 13, 14, 15}}}; },
       kernel_approximation},
      {2, "regression oracle equivalence", 5.0, [] { return json{{"seed", 2}, {"instances", 20}}; }, blr_oracle},
      {3, "credible-set calibration", 10.0,
       [] {
         return json{{"seed", 3}, {"dim", 10}, {"alpha", 0.9}, {"samples", 100000},
                     {"dofs", {1, 2, 10, 100}}, {"levels", {0.5, 0.9, 0.95, 0.99}}};
       },
       credible_calibration},
      {4, "closed-form Hamiltonian minimizer", 10.0,
       [] { return json{{"seed", 4}, {"instances", 50}, {"samples", 100000}}; }, hamiltonian_optimality},
      {5, "adjoint gradient", 30.0, [] {
         // (state dim, projected features, horizon)
         return json{{"seed", 5},
                     {"fd_step", 1e-6},
                     {"shapes", {{1, 10, 10}, {2, 30, 5}, {3, 30, 10}, {1, 12, 1}, {2, 20, 8},
                                 {3, 5, 3}, {2, 12, 10}, {3, 25, 7}, {1, 8, 4}, {3, 30, 2}}}};
       },
       adjoint_gradient},
      {6, "full-step Frank-Wolfe equals exact shooting", 30.0,
       [] { return json{{"seed", 6}, {"instances", 10}, {"outer_iterations", 5}}; }, frank_wolfe_equivalence},
      {7, "cost interval over training-set size", 300.0, [sweep_cfg] { return sweep_cfg; }, rollout_sweep},
      {8, "mean rollout improves with data", 120.0,
       [vdp] { return json{{"config", vdp}, {"few", 5}, {"many", 200}, {"seeds", {0, 1, 2}}, {"horizon", 50}}; },
       data_improves_model},
  };
}

struct PassResult {
  std::vector<Outcome> outcomes;
  std::vector<double> seconds;
};

// `replay` holds the manifests of an earlier pass; empty means use defaults.
PassResult run_pass(const std::vector<Criterion>& list, const fs::path& root, const fs::path* replay) {
  PassResult out;
  for (const auto& c : list) {
    const fs::path dir = root / ("criterion_" + std::to_string(c.id));
    fs::remove_all(dir);
    const json params =
        replay ? io::read_json(*replay / ("criterion_" + std::to_string(c.id)) / "manifest.json").at("params")
               : c.default_params();
    io::ensure_directory(dir);
    io::write_text(dir / "manifest.json", io::dump_json({{"criterion", c.id}, {"params", params}}));
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(params, dir);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what(), {}};
    }
    out.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    io::write_text(dir / "result.json", io::dump_json({{"pass", o.pass}, {"results", o.results}}));
    out.outcomes.push_back(std::move(o));
  }
  return out;
}

std::vector<std::string> differing_files(const fs::path& a, const fs::path& b, std::size_t& compared) {
  std::vector<std::string> diffs;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || io::read_text(entry.path()) != io::read_text(b / rel)) diffs.push_back(rel.string());
  }
  for (const auto& entry : fs::recursive_directory_iterator(b)) {
    if (entry.is_regular_file() && !fs::exists(a / fs::relative(entry.path(), b))) {
      diffs.push_back(fs::relative(entry.path(), b).string());
    }
  }
  return diffs;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  const fs::path config_dir = argc > 2 ? fs::path(argv[2]) : fs::path(URF_CONFIG_DIR);
  std::vector<std::string> lines;
  bool all = true;
  auto report = [&](bool ok, int id, const std::string& title, const std::string& detail) {
    char head[96];
    std::snprintf(head, sizeof(head), "%s criterion %2d  %-44s ", ok ? "PASS" : "FAIL", id, title.c_str());
    lines.push_back(head + detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
    all = all && ok;
  };
  try {
    const auto list = criteria(config_dir);
    const fs::path first = root / "pass_a";
    const fs::path second = root / "pass_b";
    const auto a = run_pass(list, first, nullptr);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& c = list[i];
      const auto& o = a.outcomes[i];
      const bool in_time = a.seconds[i] < c.time_limit_s;
      violations += o.violations;
      report(o.pass && in_time, c.id, c.title,
             o.detail + "; " + fmt(a.seconds[i]) + " s (limit " + fmt(c.time_limit_s) + " s)");
    }
    report(violations == 0, 9, "feasibility of every solver iterate",
           std::to_string(violations) + " iterates outside their ellipsoid (slack 1e-10)");
    run_pass(list, second, &first);
    std::size_t compared = 0;
    const auto diffs = differing_files(first, second, compared);
    std::string detail = std::to_string(compared) + " files compared, " + std::to_string(diffs.size()) + " differ";
    if (!diffs.empty()) detail += " (first: " + diffs.front() + ")";
    report(diffs.empty(), 10, "bit-identical rerun from manifests", detail);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance harness error: %s\n", e.what());
    return 1;
  }
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  io::write_text(root / "acceptance_report.txt", text);
  return all ? 0 : 1;
}
