#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltvs/detect.hpp"
#include "ltvs/filters.hpp"
#include "ltvs/model.hpp"

namespace ltvs {

struct ControllerConfig {
  ControllerKind kind = ControllerKind::none;
  double kp = 0.0;
  double ki = 0.0;

  Controller<double> build() const {
    return kind == ControllerKind::discrete_pi
               ? Controller<double>::discrete_pi(kp, ki)
               : Controller<double>::none();
  }
};

struct FilterConfig {
  FilterKind kind = FilterKind::kalman;
  double alpha = 0.0;
  MatrixSchedule<double> S;  // empty -> identity
  MatrixSchedule<double> L;  // empty -> identity

  HinfConfig<double> hinf() const {
    HinfConfig<double> c;
    c.alpha = alpha;
    c.S = S;
    c.L = L;
    return c;
  }

  std::string name() const;
};

struct DetectorConfig {
  double tau = std::numeric_limits<double>::quiet_NaN();  // NaN: calibrate
  Index min_gap = 20;
  double pe_threshold = 1e-6;
  Index window = 100;
  double calib_c = 3.0;
  FaultKind hypothesis_kind = FaultKind::impulse;
  MatrixSchedule<double> hypothesis_profile;  // step hypothesis only

  FaultHypothesis<double> hypothesis() const {
    return hypothesis_kind == FaultKind::step
               ? FaultHypothesis<double>::step(hypothesis_profile)
               : FaultHypothesis<double>::impulse();
  }

  DetectorParams<double> params(double tau_value) const {
    DetectorParams<double> p;
    p.min_gap = min_gap;
    p.pe_threshold = pe_threshold;
    p.window = window;
    p.tau = tau_value;
    return p;
  }
};

struct InitConfig {
  VectorX<double> x0;       // empty -> zeros
  VectorX<double> x_prior;  // empty -> zeros
  MatrixX<double> P_prior;  // empty -> identity
};

/// Everything one run needs: plant, noise, fault, controller, horizon,
/// initial conditions, filter and detector settings.
struct ScenarioConfig {
  Dimensions dims;
  LtvSystem<double> system;
  FaultModel<double> fault;
  NoiseModel<double> noise;
  ControllerConfig controller;
  Index horizon = 400;
  InitConfig init;
  FilterConfig filter;
  DetectorConfig detector;
};

/// Monte-Carlo comparison settings layered on a scenario.
struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<FilterConfig> filters;
  std::vector<VectorX<double>> theta_cases;
  Index seeds = 100;
  std::uint64_t base_seed = 3000;
  Index calib_seeds = 100;
  std::uint64_t calib_base_seed = 1000;
};

ScenarioConfig parse_scenario(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& sc);

ExperimentConfig parse_experiment(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& ec);

/// Loads a scenario from a JSON file. A manifest (object with a "config"
/// key) is unwrapped so a recorded run can be replayed as-is.
ScenarioConfig load_scenario_file(const std::filesystem::path& path);
ExperimentConfig load_experiment_file(const std::filesystem::path& path);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// FNV-1a hash of the canonical (sorted-key) JSON dump.
std::uint64_t config_hash(const nlohmann::json& j);

}  // namespace ltvs
