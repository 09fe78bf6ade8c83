#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltvs/config.hpp"
#include "ltvs/csv.hpp"
#include "ltvs/detect.hpp"
#include "ltvs/filters.hpp"
#include "ltvs/model.hpp"

namespace ltvs {

/// Trace + filter pass + detection report of a single seeded run.
struct RunOutput {
  SimulationTrace<double> trace;
  FilterRun<double> run;
  DetectionReport<double> report;
};

/// Built-in benchmark scenario: second-order unstable plant with scalar
/// output, random-walk process noise coupled to the measurement noise, PI
/// output feedback, impulse fault at step 201, 400-step horizon, minimax
/// filter at alpha = 60 with a tightened initial prior covariance (0.01 I;
/// the identity prior would make alpha = 60 infeasible at step 0).
ScenarioConfig paper_scenario();

/// Simulates, filters and detects one seed of a scenario. NaN tau falls
/// back to the scenario's configured tau (alarms disabled when that is NaN
/// too).
RunOutput run_scenario(const ScenarioConfig& sc, std::uint64_t seed,
                       const FilterConfig& filter,
                       double tau = std::numeric_limits<double>::quiet_NaN());

/// Pools the per-step statistic over fault-free runs of `nseeds` seeds and
/// returns c times its 99th percentile (nearest-rank).
double calibrate_threshold(const ScenarioConfig& sc, const FilterConfig& filter,
                           Index nseeds, std::uint64_t base_seed, double c);

struct CompareOutcome {
  std::vector<MetricsRow> rows;
  nlohmann::json manifest;
};

/// Monte-Carlo comparison of the configured filters over the theta cases:
/// per (filter, theta) row, the detection rate on faulty runs, the false
/// alarm rate on paired fault-free runs, the mean |r_hat - r| over detected
/// runs and the median post-onset statistic jump ratio.
CompareOutcome compare_detectors(const ExperimentConfig& ec);

struct ReproduceOptions {
  Index calib_seeds = 40;
  std::uint64_t calib_base_seed = 1000;
  std::uint64_t figure_seed = 42;
};

/// Emits the benchmark datasets: per filter (kalman, minimax alpha = 60)
/// and fault size (theta 1.5 and 0.6), an innovation series CSV and a
/// thresholded-statistic CSV (8 files), plus manifest.json. Deterministic:
/// identical inputs give byte-identical files.
void reproduce_paper(const std::filesystem::path& out_dir,
                     const ReproduceOptions& opts = {});

/// Manifest of a run: resolved configuration, seed(s), defaults that were
/// filled in, artifact version and a hash of the canonical config. The
/// embedded config is sufficient to reproduce the outputs bit-for-bit.
nlohmann::json make_manifest(const std::string& command, const ScenarioConfig& sc,
                             const std::vector<std::uint64_t>& seeds,
                             const nlohmann::json& extra = {});

/// Thread cap for seed fan-out: LTV_SENTINEL_THREADS, else the hardware
/// concurrency.
unsigned thread_cap();

/// Runs fn(i) for i in [0, count) across worker threads (deterministic
/// output: workers own disjoint index strides and never share state).
void parallel_for(Index count, const std::function<void(Index)>& fn);

}  // namespace ltvs
