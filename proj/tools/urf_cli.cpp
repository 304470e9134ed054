// urf: command-line driver for the experiment pipeline.
//
//   urf generate  --config run.json [--out DIR] [--seed N]
//   urf fit       --config run.json [--out DIR] [--dataset FILE]
//   urf predict   --config run.json [--out DIR] [--model FILE]
//   urf worstcase --config run.json [--out DIR] [--model FILE]
//   urf sweep     --config run.json [--out DIR] [--jobs N]
//
// Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical failure.

#include <urf/experiment.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace {

struct Options {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::string> dataset;
  std::optional<std::string> model;
};

urf::ExperimentConfig load(const Options& opt) {
  auto doc = urf::io::read_json(opt.config_path);
  if (opt.seed) {
    auto& root = doc.contains("manifest_version") ? doc["config"] : doc;
    root["seed"] = *opt.seed;
  }
  auto cfg = urf::parse_config(doc);
  if (opt.out) cfg.output_dir = *opt.out;
  return cfg;
}

std::optional<urf::io::fs::path> as_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return urf::io::fs::path(*s);
}

int run(const std::string& command, const Options& opt) {
  const auto cfg = load(opt);
  for (const auto& key : cfg.unvalidated_defaults) {
    urf::log_line("note: '" + key + "' uses an unvalidated default (flagged in the manifest)");
  }
  const urf::io::fs::path out = cfg.output_dir;
  if (command == "generate") {
    const auto data = urf::run_generate(cfg, out);
    urf::log_line(urf::detail::concat("generate: wrote ", data.inputs.rows(), " transitions to ", out.string()));
  } else if (command == "fit") {
    urf::run_fit(cfg, out, as_path(opt.dataset));
  } else if (command == "predict") {
    urf::run_predict(cfg, out, as_path(opt.model));
  } else if (command == "worstcase") {
    const auto s = urf::run_worstcase(cfg, out, as_path(opt.model));
    std::printf("best %s\nmean %s\nworst %s\ntrue %s\n", urf::io::format_double(s.best).c_str(),
                urf::io::format_double(s.mean).c_str(), urf::io::format_double(s.worst).c_str(),
                urf::io::format_double(s.truth).c_str());
  } else {
    const auto cells = urf::run_sweep(cfg, out, opt.jobs);
    urf::log_line(urf::detail::concat("sweep: ", cells.size(), " cells written to ", (out / "sweep.csv").string()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware random feature dynamics: fitting and worst-case cost bounds"};
  app.require_subcommand(1);
  Options opt;
  std::string chosen;
  const char* commands[][2] = {{"generate", "simulate the reference system and write dataset.csv"},
                               {"fit", "fit the set-valued model and write model.json"},
                               {"predict", "write mean, true and tube trajectories"},
                               {"worstcase", "compute best/mean/worst cost bounds"},
                               {"sweep", "repeat generate/fit/worstcase over one config axis"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON config or run manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
    sub->add_option("--seed", opt.seed, "global seed (overrides config)");
    sub->add_option("--jobs", opt.jobs, "worker threads for sweep")->check(CLI::PositiveNumber);
    if (std::string(name) == "fit") sub->add_option("--dataset", opt.dataset, "dataset CSV (default OUT/dataset.csv)");
    if (std::string(name) == "predict" || std::string(name) == "worstcase") {
      sub->add_option("--model", opt.model, "model bundle (default OUT/model.json)");
    }
    sub->callback([&chosen, name = std::string(name)] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run(chosen, opt);
  } catch (const urf::ValidationError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const urf::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const urf::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 1;
  }
}
