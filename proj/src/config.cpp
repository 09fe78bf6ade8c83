#include "ltvs/config.hpp"

#include <fstream>
#include <sstream>

namespace ltvs {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

const json& member(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(std::string("missing config key: ") + key);
  return *it;
}

MatrixX<double> parse_matrix(const json& j, const char* what) {
  if (j.is_number()) {
    MatrixX<double> m(1, 1);
    m(0, 0) = j.get<double>();
    return m;
  }
  if (!j.is_array() || j.empty() || !j.front().is_array())
    fail(std::string(what) + ": expected a matrix (array of row arrays)");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.front().size());
  MatrixX<double> m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      fail(std::string(what) + ": ragged matrix rows");
    for (Index c = 0; c < cols; ++c) {
      const json& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number()) fail(std::string(what) + ": non-numeric matrix entry");
      m(r, c) = cell.get<double>();
    }
  }
  return m;
}

VectorX<double> parse_vector(const json& j, const char* what) {
  if (j.is_number()) {
    VectorX<double> v(1);
    v(0) = j.get<double>();
    return v;
  }
  if (!j.is_array()) fail(std::string(what) + ": expected a numeric array");
  VectorX<double> v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const json& cell = j[static_cast<std::size_t>(i)];
    if (!cell.is_number()) fail(std::string(what) + ": non-numeric entry");
    v(i) = cell.get<double>();
  }
  return v;
}

/// A schedule is either a matrix (constant) or an object keyed by the step
/// at which each value takes effect, e.g. {"0": M0, "150": M1}.
MatrixSchedule<double> parse_schedule(const json& j, const char* what) {
  if (!j.is_object()) return MatrixSchedule<double>::constant(parse_matrix(j, what));
  std::vector<std::pair<Index, MatrixX<double>>> entries;
  for (const auto& [key, value] : j.items()) {
    Index k = 0;
    try {
      k = static_cast<Index>(std::stoll(key));
    } catch (const std::exception&) {
      fail(std::string(what) + ": schedule keys must be step numbers");
    }
    entries.emplace_back(k, parse_matrix(value, what));
  }
  return MatrixSchedule<double>::table(std::move(entries));
}

json matrix_to_json(const MatrixX<double>& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorX<double>& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json schedule_to_json(const MatrixSchedule<double>& s) {
  if (s.is_constant()) return matrix_to_json(s.at(0));
  json obj = json::object();
  for (const auto& [k, m] : s.entries()) obj[std::to_string(k)] = matrix_to_json(m);
  return obj;
}

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "random_walk") return NoiseKind::random_walk;
  fail("unknown noise kind: " + s);
}

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::random_walk: return "random_walk";
  }
  return "none";
}

FaultKind parse_fault_kind(const std::string& s) {
  if (s == "none") return FaultKind::none;
  if (s == "step") return FaultKind::step;
  if (s == "impulse") return FaultKind::impulse;
  fail("unknown fault kind: " + s);
}

std::string fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::none: return "none";
    case FaultKind::step: return "step";
    case FaultKind::impulse: return "impulse";
  }
  return "none";
}

FilterKind parse_filter_kind(const std::string& s) {
  if (s == "kalman") return FilterKind::kalman;
  if (s == "hinf") return FilterKind::hinf;
  fail("unknown filter kind: " + s);
}

FilterConfig parse_filter(const json& j) {
  FilterConfig fc;
  fc.kind = parse_filter_kind(member(j, "kind").get<std::string>());
  if (j.contains("alpha")) fc.alpha = j["alpha"].get<double>();
  if (fc.kind == FilterKind::kalman && fc.alpha != 0.0)
    fail("alpha applies to the hinf filter only");
  if (fc.alpha < 0.0) fail("alpha must be non-negative");
  if (j.contains("S")) fc.S = parse_schedule(j["S"], "filter.S");
  if (j.contains("L")) fc.L = parse_schedule(j["L"], "filter.L");
  return fc;
}

json filter_to_json(const FilterConfig& fc) {
  json j;
  j["kind"] = fc.kind == FilterKind::hinf ? "hinf" : "kalman";
  j["alpha"] = fc.alpha;
  if (!fc.S.empty()) j["S"] = schedule_to_json(fc.S);
  if (!fc.L.empty()) j["L"] = schedule_to_json(fc.L);
  return j;
}

}  // namespace

std::string FilterConfig::name() const {
  if (kind == FilterKind::kalman) return "kalman";
  std::ostringstream os;
  os << "hinf_a" << alpha;
  return os.str();
}

ScenarioConfig parse_scenario(const json& j) {
  if (!j.is_object()) fail("scenario config must be a JSON object");
  ScenarioConfig sc;

  const json& dims = member(j, "dims");
  sc.dims.n = member(dims, "n").get<Index>();
  sc.dims.l = member(dims, "l").get<Index>();
  sc.dims.p = member(dims, "p").get<Index>();
  sc.dims.m = dims.contains("m") ? dims["m"].get<Index>() : sc.dims.n;
  if (!sc.dims.valid())
    fail("dims must satisfy n >= 1, l >= 0, p >= 1, 1 <= m <= n");

  const json& model = member(j, "model");
  MatrixSchedule<double> A = parse_schedule(member(model, "A"), "model.A");
  MatrixSchedule<double> B =
      model.contains("B")
          ? parse_schedule(model["B"], "model.B")
          : MatrixSchedule<double>::constant(MatrixX<double>::Zero(sc.dims.n, sc.dims.l));
  MatrixSchedule<double> C = parse_schedule(member(model, "C"), "model.C");
  MatrixSchedule<double> D =
      model.contains("D")
          ? parse_schedule(model["D"], "model.D")
          : MatrixSchedule<double>::constant(MatrixX<double>::Zero(sc.dims.p, sc.dims.l));
  // The filters need a process-covariance design parameter even when the
  // true disturbance has no stationary covariance; q I with q = 0.0025 is
  // the default.
  MatrixSchedule<double> Q =
      model.contains("Q")
          ? parse_schedule(model["Q"], "model.Q")
          : MatrixSchedule<double>::constant(
                (0.0025 * MatrixX<double>::Identity(sc.dims.n, sc.dims.n)).eval());
  MatrixSchedule<double> R = parse_schedule(member(model, "R"), "model.R");
  sc.system = LtvSystem<double>(sc.dims, std::move(A), std::move(B), std::move(C),
                                std::move(D), std::move(Q), std::move(R));

  if (j.contains("noise")) {
    const json& noise = j["noise"];
    const NoiseKind kind = parse_noise_kind(member(noise, "kind").get<std::string>());
    const std::uint64_t seed =
        noise.contains("seed") ? noise["seed"].get<std::uint64_t>() : 0;
    VectorX<double> coupling;
    if (noise.contains("coupling"))
      coupling = parse_vector(noise["coupling"], "noise.coupling");
    const bool independent = noise.contains("independent_driver") &&
                             noise["independent_driver"].get<bool>();
    sc.noise = NoiseModel<double>(kind, seed, std::move(coupling), independent);
  }

  if (j.contains("controller")) {
    const json& ctrl = j["controller"];
    const std::string kind = member(ctrl, "kind").get<std::string>();
    if (kind == "discrete_pi") {
      sc.controller.kind = ControllerKind::discrete_pi;
      sc.controller.kp = member(ctrl, "kp").get<double>();
      sc.controller.ki = member(ctrl, "ki").get<double>();
    } else if (kind != "none") {
      fail("unknown controller kind: " + kind);
    }
  }

  if (j.contains("fault")) {
    const json& fault = j["fault"];
    const FaultKind kind = parse_fault_kind(member(fault, "kind").get<std::string>());
    if (kind == FaultKind::impulse) {
      sc.fault = FaultModel<double>::impulse(
          member(fault, "onset").get<Index>(),
          parse_vector(member(fault, "theta"), "fault.theta"));
      if (sc.fault.theta.size() != sc.dims.n)
        fail("impulse fault theta must have length n");
    } else if (kind == FaultKind::step) {
      sc.fault = FaultModel<double>::step(
          member(fault, "onset").get<Index>(),
          parse_vector(member(fault, "theta"), "fault.theta"),
          parse_schedule(member(fault, "profile"), "fault.profile"));
      if (sc.fault.theta.size() != sc.dims.m)
        fail("step fault theta must have length m");
    }
  }

  if (j.contains("horizon")) sc.horizon = j["horizon"].get<Index>();
  if (sc.horizon < 1) fail("horizon must be at least 1");

  if (j.contains("init")) {
    const json& init = j["init"];
    if (init.contains("x0")) sc.init.x0 = parse_vector(init["x0"], "init.x0");
    if (init.contains("x_prior"))
      sc.init.x_prior = parse_vector(init["x_prior"], "init.x_prior");
    if (init.contains("P_prior"))
      sc.init.P_prior = parse_matrix(init["P_prior"], "init.P_prior");
  }

  if (j.contains("filter")) sc.filter = parse_filter(j["filter"]);

  if (j.contains("detector")) {
    const json& det = j["detector"];
    if (det.contains("tau") && !det["tau"].is_null())
      sc.detector.tau = det["tau"].get<double>();
    if (det.contains("min_gap")) sc.detector.min_gap = det["min_gap"].get<Index>();
    if (det.contains("pe_threshold"))
      sc.detector.pe_threshold = det["pe_threshold"].get<double>();
    if (det.contains("window")) sc.detector.window = det["window"].get<Index>();
    if (det.contains("calib_c")) sc.detector.calib_c = det["calib_c"].get<double>();
    if (det.contains("hypothesis")) {
      sc.detector.hypothesis_kind =
          parse_fault_kind(det["hypothesis"].get<std::string>());
      if (sc.detector.hypothesis_kind == FaultKind::none)
        fail("detector hypothesis must be step or impulse");
    }
    if (det.contains("hypothesis_profile"))
      sc.detector.hypothesis_profile =
          parse_schedule(det["hypothesis_profile"], "detector.hypothesis_profile");
    if (sc.detector.hypothesis_kind == FaultKind::step &&
        sc.detector.hypothesis_profile.empty())
      fail("step hypothesis requires detector.hypothesis_profile");
  }
  return sc;
}

json scenario_to_json(const ScenarioConfig& sc) {
  json j;
  j["dims"] = {{"n", sc.dims.n}, {"l", sc.dims.l}, {"p", sc.dims.p}, {"m", sc.dims.m}};
  json model;
  model["A"] = schedule_to_json(sc.system.A_schedule());
  model["B"] = schedule_to_json(sc.system.B_schedule());
  model["C"] = schedule_to_json(sc.system.C_schedule());
  model["D"] = schedule_to_json(sc.system.D_schedule());
  model["Q"] = schedule_to_json(sc.system.Q_schedule());
  model["R"] = schedule_to_json(sc.system.R_schedule());
  j["model"] = std::move(model);

  json noise;
  noise["kind"] = noise_kind_name(sc.noise.kind());
  noise["seed"] = sc.noise.seed();
  if (sc.noise.coupling().size() > 0)
    noise["coupling"] = vector_to_json(sc.noise.coupling());
  noise["independent_driver"] = sc.noise.independent_driver();
  j["noise"] = std::move(noise);

  json ctrl;
  ctrl["kind"] =
      sc.controller.kind == ControllerKind::discrete_pi ? "discrete_pi" : "none";
  if (sc.controller.kind == ControllerKind::discrete_pi) {
    ctrl["kp"] = sc.controller.kp;
    ctrl["ki"] = sc.controller.ki;
  }
  j["controller"] = std::move(ctrl);

  json fault;
  fault["kind"] = fault_kind_name(sc.fault.kind);
  if (sc.fault.kind != FaultKind::none) {
    fault["onset"] = sc.fault.onset;
    fault["theta"] = vector_to_json(sc.fault.theta);
    if (sc.fault.kind == FaultKind::step)
      fault["profile"] = schedule_to_json(sc.fault.profile);
  }
  j["fault"] = std::move(fault);

  j["horizon"] = sc.horizon;

  json init;
  init["x0"] = vector_to_json(sc.init.x0.size() > 0
                                  ? sc.init.x0
                                  : VectorX<double>::Zero(sc.dims.n).eval());
  init["x_prior"] = vector_to_json(sc.init.x_prior.size() > 0
                                       ? sc.init.x_prior
                                       : VectorX<double>::Zero(sc.dims.n).eval());
  init["P_prior"] =
      matrix_to_json(sc.init.P_prior.size() > 0
                         ? sc.init.P_prior
                         : MatrixX<double>::Identity(sc.dims.n, sc.dims.n).eval());
  j["init"] = std::move(init);

  j["filter"] = filter_to_json(sc.filter);

  json det;
  if (std::isnan(sc.detector.tau))
    det["tau"] = nullptr;
  else
    det["tau"] = sc.detector.tau;
  det["min_gap"] = sc.detector.min_gap;
  det["pe_threshold"] = sc.detector.pe_threshold;
  det["window"] = sc.detector.window;
  det["calib_c"] = sc.detector.calib_c;
  det["hypothesis"] = fault_kind_name(sc.detector.hypothesis_kind);
  if (!sc.detector.hypothesis_profile.empty())
    det["hypothesis_profile"] = schedule_to_json(sc.detector.hypothesis_profile);
  j["detector"] = std::move(det);
  return j;
}

ExperimentConfig parse_experiment(const json& j) {
  ExperimentConfig ec;
  ec.scenario = parse_scenario(j);
  if (!j.contains("experiment")) {
    // Default comparison: the scenario's filter against the Kalman filter.
    FilterConfig kf;
    kf.kind = FilterKind::kalman;
    ec.filters = {kf, ec.scenario.filter};
    if (ec.scenario.fault.kind != FaultKind::none)
      ec.theta_cases = {ec.scenario.fault.theta};
    return ec;
  }
  const json& ex = j["experiment"];
  if (ex.contains("filters")) {
    for (const json& f : ex["filters"]) ec.filters.push_back(parse_filter(f));
  }
  if (ec.filters.empty()) fail("experiment.filters must list at least one filter");
  if (ex.contains("theta_cases")) {
    for (const json& t : ex["theta_cases"])
      ec.theta_cases.push_back(parse_vector(t, "experiment.theta_cases"));
  }
  if (ec.theta_cases.empty() && ec.scenario.fault.kind != FaultKind::none)
    ec.theta_cases = {ec.scenario.fault.theta};
  if (ec.theta_cases.empty()) fail("experiment needs at least one theta case");
  if (ex.contains("seeds")) ec.seeds = ex["seeds"].get<Index>();
  if (ex.contains("base_seed")) ec.base_seed = ex["base_seed"].get<std::uint64_t>();
  if (ex.contains("calib_seeds")) ec.calib_seeds = ex["calib_seeds"].get<Index>();
  if (ex.contains("calib_base_seed"))
    ec.calib_base_seed = ex["calib_base_seed"].get<std::uint64_t>();
  return ec;
}

json experiment_to_json(const ExperimentConfig& ec) {
  json j = scenario_to_json(ec.scenario);
  json ex;
  ex["filters"] = json::array();
  for (const auto& f : ec.filters) ex["filters"].push_back(filter_to_json(f));
  ex["theta_cases"] = json::array();
  for (const auto& t : ec.theta_cases) ex["theta_cases"].push_back(vector_to_json(t));
  ex["seeds"] = ec.seeds;
  ex["base_seed"] = ec.base_seed;
  ex["calib_seeds"] = ec.calib_seeds;
  ex["calib_base_seed"] = ec.calib_base_seed;
  j["experiment"] = std::move(ex);
  return j;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail("invalid JSON in " + path.string() + ": " + e.what());
  }
  // A manifest embeds the original config under "config"; unwrap it so a
  // recorded run can be replayed directly.
  if (j.is_object() && j.contains("config") && j["config"].is_object())
    return j["config"];
  return j;
}

ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  return parse_scenario(load_json_file(path));
}

ExperimentConfig load_experiment_file(const std::filesystem::path& path) {
  return parse_experiment(load_json_file(path));
}

std::uint64_t config_hash(const json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ltvs
