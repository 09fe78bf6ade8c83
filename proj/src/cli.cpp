#include "ltvs/cli.hpp"

#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltvs/config.hpp"
#include "ltvs/csv.hpp"
#include "ltvs/errors.hpp"
#include "ltvs/experiments.hpp"

namespace ltvs {

namespace {

using nlohmann::json;

namespace fs = std::filesystem;

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> filter;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<Index> window;
  std::optional<Index> seeds;
};

FilterConfig resolve_filter(const ScenarioConfig& sc, const CommonOpts& o) {
  FilterConfig fc = sc.filter;
  if (o.filter) {
    if (*o.filter == "kalman") {
      fc.kind = FilterKind::kalman;
      fc.alpha = 0.0;
    } else if (*o.filter == "hinf") {
      fc.kind = FilterKind::hinf;
    } else {
      throw ConfigError("unknown filter: " + *o.filter);
    }
  }
  if (o.alpha) {
    if (fc.kind != FilterKind::hinf)
      throw ConfigError("--alpha applies to the hinf filter only");
    fc.alpha = *o.alpha;
  }
  return fc;
}

ScenarioConfig load_and_override(const CommonOpts& o) {
  ScenarioConfig sc = load_scenario_file(o.config);
  if (o.tau) sc.detector.tau = *o.tau;
  if (o.window) sc.detector.window = *o.window;
  return sc;
}

void run_simulate(const CommonOpts& o) {
  ScenarioConfig sc = load_and_override(o);
  const std::uint64_t seed = o.seed.value_or(sc.noise.seed());
  SimulationTrace<double> trace = simulate(sc.system, sc.controller.build(),
                                           sc.noise, sc.fault, sc.horizon, seed,
                                           sc.init.x0);
  const std::string csv = trace_csv(trace);
  json manifest = make_manifest("simulate", sc, {seed});
  atomic_write(fs::path(o.out) / "trace.csv", csv);
  atomic_write(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
}

void run_detect(const CommonOpts& o) {
  ScenarioConfig sc = load_and_override(o);
  const FilterConfig filter = resolve_filter(sc, o);
  const std::uint64_t seed = o.seed.value_or(sc.noise.seed());
  RunOutput out = run_scenario(sc, seed, filter);
  const double tau_used = out.report.tau;

  json meta;
  meta["filter"] = filter.kind == FilterKind::hinf ? "hinf" : "kalman";
  meta["alpha"] = filter.alpha;
  meta["tau"] = std::isinf(tau_used) ? json(nullptr) : json(tau_used);
  meta["min_gap"] = sc.detector.min_gap;
  meta["pe_threshold"] = sc.detector.pe_threshold;
  meta["window"] = sc.detector.window;
  meta["seed"] = seed;
  meta["pe_satisfied"] = out.report.pe_satisfied;
  meta["r_hat"] = out.report.final_r_hat;
  meta["sigma_source"] =
      filter.kind == FilterKind::hinf
          ? "filter design covariance (minimax prior, not a statistical one)"
          : "Kalman prior covariance";

  const std::string trace = trace_csv(out.trace);
  const std::string detection = detection_csv(out.report);
  json manifest = make_manifest("detect", sc, {seed});
  atomic_write(fs::path(o.out) / "trace.csv", trace);
  atomic_write(fs::path(o.out) / "detection.csv", detection);
  atomic_write(fs::path(o.out) / "detection_meta.json", meta.dump(2) + "\n");
  atomic_write(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
}

void run_reproduce(const CommonOpts& o) {
  ReproduceOptions opts;
  if (o.seeds) opts.calib_seeds = *o.seeds;
  if (o.seed) opts.figure_seed = *o.seed;
  reproduce_paper(fs::path(o.out), opts);
}

void run_compare(const CommonOpts& o) {
  ExperimentConfig ec = load_experiment_file(o.config);
  if (o.tau) ec.scenario.detector.tau = *o.tau;
  if (o.window) ec.scenario.detector.window = *o.window;
  if (o.seeds) ec.seeds = *o.seeds;
  if (o.seed) ec.base_seed = *o.seed;
  CompareOutcome outcome = compare_detectors(ec);
  atomic_write(fs::path(o.out) / "metrics.csv", metrics_csv(outcome.rows));
  atomic_write(fs::path(o.out) / "manifest.json", outcome.manifest.dump(2) + "\n");
}

void run_calibrate(const CommonOpts& o) {
  ScenarioConfig sc = load_and_override(o);
  const FilterConfig filter = resolve_filter(sc, o);
  const Index nseeds = o.seeds.value_or(100);
  const std::uint64_t base_seed = o.seed.value_or(1000);
  const double tau =
      calibrate_threshold(sc, filter, nseeds, base_seed, sc.detector.calib_c);
  std::cout << format_double(tau) << "\n";
  if (!o.out.empty()) {
    json calib;
    calib["tau"] = tau;
    calib["filter"] = filter.kind == FilterKind::hinf ? "hinf" : "kalman";
    calib["alpha"] = filter.alpha;
    calib["calib_c"] = sc.detector.calib_c;
    calib["seeds"] = nseeds;
    calib["base_seed"] = base_seed;
    atomic_write(fs::path(o.out) / "calibration.json", calib.dump(2) + "\n");
  }
}

void require_config_exists(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"fault detection for discrete linear time-varying systems"};
  app.require_subcommand(1);

  CommonOpts o;
  std::uint64_t seed_val = 0;
  std::string filter_val;
  double alpha_val = 0, tau_val = 0;
  Index window_val = 0, seeds_val = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_out) {
    auto* config = sub->add_option("--config", o.config, "scenario config (JSON)");
    if (needs_config) config->required();
    auto* out = sub->add_option("--out", o.out, "output directory");
    if (needs_out) out->required();
    sub->add_option("--seed", seed_val, "seed override")
        ->each([&](const std::string&) { o.seed = seed_val; });
    sub->add_option("--filter", filter_val, "filter kind: kalman or hinf")
        ->check(CLI::IsMember({"kalman", "hinf"}))
        ->each([&](const std::string&) { o.filter = filter_val; });
    sub->add_option("--alpha", alpha_val, "minimax performance parameter")
        ->each([&](const std::string&) { o.alpha = alpha_val; });
    sub->add_option("--tau", tau_val, "alarm threshold")
        ->each([&](const std::string&) { o.tau = tau_val; });
    sub->add_option("--window", window_val, "onset-candidate window")
        ->each([&](const std::string&) { o.window = window_val; });
    sub->add_option("--seeds", seeds_val, "number of Monte-Carlo seeds")
        ->each([&](const std::string&) { o.seeds = seeds_val; });
  };

  CLI::App* sim = app.add_subcommand("simulate", "simulate one trace");
  add_common(sim, true, true);
  CLI::App* det = app.add_subcommand("detect", "simulate, filter and detect");
  add_common(det, true, true);
  CLI::App* rep = app.add_subcommand(
      "reproduce-paper", "emit the built-in benchmark datasets");
  add_common(rep, false, true);
  CLI::App* cmp = app.add_subcommand("compare", "Monte-Carlo detector comparison");
  add_common(cmp, true, true);
  CLI::App* cal = app.add_subcommand("calibrate-threshold",
                                     "calibrate tau on fault-free runs");
  add_common(cal, true, false);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(sim)) {
      require_config_exists(o.config);
      run_simulate(o);
    } else if (app.got_subcommand(det)) {
      require_config_exists(o.config);
      run_detect(o);
    } else if (app.got_subcommand(rep)) {
      run_reproduce(o);
    } else if (app.got_subcommand(cmp)) {
      require_config_exists(o.config);
      run_compare(o);
    } else if (app.got_subcommand(cal)) {
      require_config_exists(o.config);
      run_calibrate(o);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InfeasibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ltvs
