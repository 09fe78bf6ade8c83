#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "ltvs/cli.hpp"
#include "ltvs/csv.hpp"

namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv = {"ltv-sentinel"};
  argv.insert(argv.end(), args.begin(), args.end());
  return ltvs::run_cli(static_cast<int>(argv.size()), argv.data());
}

struct CaptureStderr {
  std::ostringstream stream;
  std::streambuf* old;
  CaptureStderr() : old(std::cerr.rdbuf(stream.rdbuf())) {}
  ~CaptureStderr() { std::cerr.rdbuf(old); }
  std::string text() const { return stream.str(); }
};

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("ltvs_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kScenarioJson = R"({
  "dims": {"n": 2, "l": 1, "p": 1, "m": 2},
  "model": {
    "A": [[0.5, 1.0], [0.0, 1.2]],
    "B": [[0.0], [1.0]],
    "C": [[1.0, 0.0]],
    "R": [[0.0025]]
  },
  "noise": {"kind": "random_walk", "seed": 1, "coupling": [1, 1]},
  "controller": {"kind": "discrete_pi", "kp": 0.209, "ki": 0.0011},
  "fault": {"kind": "impulse", "onset": 201, "theta": [1.5, 0.0]},
  "horizon": 400,
  "init": {"P_prior": [[0.01, 0.0], [0.0, 0.01]]},
  "filter": {"kind": "hinf", "alpha": 60.0},
  "detector": {"tau": 50.0, "min_gap": 20, "window": 100}
})";

fs::path write_scenario(const fs::path& dir, const char* text = kScenarioJson) {
  fs::path path = dir / "scenario.json";
  std::ofstream out(path);
  out << text;
  return path;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("simulate writes a trace and manifest") {
  const fs::path dir = fresh_dir("simulate");
  const fs::path cfg = write_scenario(dir);
  const fs::path out = dir / "out";
  CHECK(cli({"simulate", "--config", cfg.c_str(), "--seed", "7", "--out",
             out.c_str()}) == 0);
  REQUIRE(fs::exists(out / "trace.csv"));
  REQUIRE(fs::exists(out / "manifest.json"));
  const std::string csv = ltvs::read_file(out / "trace.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "k,x1,x2,u1,y1,w1,w2,v1");
  // 400 data rows + header
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 401);
  fs::remove_all(dir);
}

TEST_CASE("re-running produces identical bytes") {
  const fs::path dir = fresh_dir("idempotent");
  const fs::path cfg = write_scenario(dir);
  const fs::path out = dir / "out";
  REQUIRE(cli({"simulate", "--config", cfg.c_str(), "--seed", "3", "--out",
               out.c_str()}) == 0);
  const std::string first = ltvs::read_file(out / "trace.csv");
  REQUIRE(cli({"simulate", "--config", cfg.c_str(), "--seed", "3", "--out",
               out.c_str()}) == 0);
  CHECK(ltvs::read_file(out / "trace.csv") == first);
  fs::remove_all(dir);
}

TEST_CASE("detect writes report, sidecar and trace") {
  const fs::path dir = fresh_dir("detect");
  const fs::path cfg = write_scenario(dir);
  const fs::path out = dir / "out";
  CHECK(cli({"detect", "--config", cfg.c_str(), "--seed", "7", "--out",
             out.c_str()}) == 0);
  REQUIRE(fs::exists(out / "detection.csv"));
  REQUIRE(fs::exists(out / "detection_meta.json"));
  const std::string csv = ltvs::read_file(out / "detection.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "k,h,theta_hat_1,theta_hat_2,r_hat,alarm");
  auto meta = nlohmann::json::parse(ltvs::read_file(out / "detection_meta.json"));
  CHECK(meta["filter"] == "hinf");
  CHECK(meta["alpha"] == 60.0);
  CHECK(meta["seed"] == 7);
  fs::remove_all(dir);
}

TEST_CASE("infeasible alpha exits with code 2 and names the step") {
  const fs::path dir = fresh_dir("infeasible");
  const fs::path cfg = write_scenario(dir);
  const fs::path out = dir / "out";
  CaptureStderr captured;
  const int code = cli({"detect", "--config", cfg.c_str(), "--filter", "hinf",
                        "--alpha", "500", "--out", out.c_str()});
  CHECK(code == 2);
  CHECK(captured.text().find("step") != std::string::npos);
  // atomic discipline: the failed workflow left nothing behind
  CHECK_FALSE(fs::exists(out / "detection.csv"));
  CHECK_FALSE(fs::exists(out / "trace.csv"));
  fs::remove_all(dir);
}

TEST_CASE("divergent simulation exits with code 3") {
  const fs::path dir = fresh_dir("diverge");
  const char* bad = R"({
    "dims": {"n": 1, "l": 0, "p": 1, "m": 1},
    "model": {"A": [[1e200]], "C": [[1.0]], "Q": [[0.0]], "R": [[1.0]]},
    "init": {"x0": [1e200]},
    "horizon": 10
  })";
  const fs::path cfg = write_scenario(dir, bad);
  const fs::path out = dir / "out";
  CaptureStderr captured;
  CHECK(cli({"simulate", "--config", cfg.c_str(), "--out", out.c_str()}) == 3);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with code 1") {
  const fs::path dir = fresh_dir("usage");
  const fs::path cfg = write_scenario(dir);
  CaptureStderr captured;
  SUBCASE("missing config file") {
    CHECK(cli({"simulate", "--config", "/nonexistent/nope.json", "--out",
               dir.c_str()}) == 1);
  }
  SUBCASE("unknown flag") {
    CHECK(cli({"simulate", "--config", cfg.c_str(), "--out", dir.c_str(),
               "--frobnicate", "1"}) == 1);
  }
  SUBCASE("missing subcommand") { CHECK(cli({}) == 1); }
  SUBCASE("malformed json") {
    const fs::path broken = dir / "broken.json";
    std::ofstream(broken) << "{not json";
    CHECK(cli({"simulate", "--config", broken.c_str(), "--out", dir.c_str()}) == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("reproduce-paper emits the eight datasets") {
  const fs::path dir = fresh_dir("repro_cli");
  CHECK(cli({"reproduce-paper", "--out", dir.c_str(), "--seeds", "6"}) == 0);
  int csvs = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") ++csvs;
  CHECK(csvs == 8);
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("calibrate-threshold prints a positive tau") {
  const fs::path dir = fresh_dir("calib");
  const fs::path cfg = write_scenario(dir);
  // redirected stdout
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code =
      cli({"calibrate-threshold", "--config", cfg.c_str(), "--seeds", "6"});
  std::cout.rdbuf(old);
  CHECK(code == 0);
  CHECK(std::stod(captured.str()) > 0.0);
  fs::remove_all(dir);
}

TEST_CASE("compare writes the metrics table") {
  const fs::path dir = fresh_dir("compare");
  std::string cfg_text = kScenarioJson;
  cfg_text.pop_back();  // strip trailing }
  while (cfg_text.back() == '\n' || cfg_text.back() == ' ') cfg_text.pop_back();
  cfg_text += R"(,
  "experiment": {
    "filters": [{"kind": "kalman"}, {"kind": "hinf", "alpha": 60.0}],
    "theta_cases": [[1.5, 0.0]],
    "seeds": 4, "base_seed": 3000, "calib_seeds": 4, "calib_base_seed": 1000
  }
})";
  const fs::path cfg = dir / "experiment.json";
  std::ofstream(cfg) << cfg_text;
  const fs::path out = dir / "out";
  CHECK(cli({"compare", "--config", cfg.c_str(), "--out", out.c_str()}) == 0);
  REQUIRE(fs::exists(out / "metrics.csv"));
  const std::string csv = ltvs::read_file(out / "metrics.csv");
  CHECK(csv.substr(0, csv.find('\n')) ==
        "config,seeds,detect_rate,false_alarm_rate,mean_abs_onset_err,median_h_jump");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
  fs::remove_all(dir);
}

TEST_SUITE_END();
