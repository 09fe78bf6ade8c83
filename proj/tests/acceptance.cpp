// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ltvs/cli.hpp"
#include "ltvs/csv.hpp"
#include "ltvs/detect.hpp"
#include "ltvs/experiments.hpp"

using namespace ltvs;
namespace fs = std::filesystem;

namespace {

VectorX<double> vec2(double a, double b) {
  VectorX<double> v(2);
  v << a, b;
  return v;
}

MatrixX<double> random_matrix(std::mt19937& rng, Index r, Index c) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  MatrixX<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

MatrixX<double> random_spd(std::mt19937& rng, Index n, double jitter) {
  MatrixX<double> m = random_matrix(rng, n, n);
  return (m * m.transpose() + jitter * MatrixX<double>::Identity(n, n)).eval();
}

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> check;
};

// --- 1: closed-form updates equal the weighted-regression route ------------

bool regression_equivalence(std::string& detail) {
  std::mt19937 rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<Index> ndist(1, 4), pdist(1, 2), ldist(0, 2);
    const Index n = ndist(rng), p = pdist(rng), l = ldist(rng);
    const MatrixX<double> C = random_matrix(rng, p, n);
    const MatrixX<double> D = random_matrix(rng, p, l);
    const MatrixX<double> R = random_spd(rng, p, 0.1);
    const MatrixX<double> P0 = random_spd(rng, n, 0.2);
    const VectorX<double> x0 = random_matrix(rng, n, 1);
    const VectorX<double> y = random_matrix(rng, p, 1);
    const VectorX<double> u = random_matrix(rng, l, 1);
    auto s = FilterState<double>::initial(x0, P0);

    auto kf = kf_update(s, y, C, D, R, u);
    auto kf_reg = solve_weighted_regression(kf_regression(s, y, C, D, R, u));
    worst = std::max(worst, (kf.x_post - kf_reg.estimate).cwiseAbs().maxCoeff());
    worst = std::max(worst, (kf.P_post - kf_reg.covariance).cwiseAbs().maxCoeff());

    auto cfg = HinfConfig<double>::identity(0.0);
    const double margin =
        symmetric_eigen_bounds(hinf_information(s.P_prior, cfg, C, R)).first;
    cfg.alpha = 0.5 * margin;  // feasible by construction
    auto hf = hinf_update(s, cfg, y, C, D, R, u);
    auto hf_reg = solve_weighted_regression(hinf_regression(s, cfg, y, C, D, R, u));
    worst = std::max(worst, (hf.x_post - hf_reg.estimate).cwiseAbs().maxCoeff());
    worst = std::max(worst, (hf.P_post - hf_reg.covariance).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "max deviation " << worst << " over 100 systems (tol 1e-10)";
  detail = os.str();
  return worst <= 1e-10;
}

// --- 2: alpha -> 0 degeneracy ----------------------------------------------

bool alpha_zero_limit(std::string& detail) {
  auto sc = paper_scenario();
  auto trace = simulate(sc.system, sc.controller.build(), sc.noise,
                        FaultModel<double>::none_fault(), 200, 3, sc.init.x0);
  auto kf = run_filter(sc.system, trace.y, trace.u, FilterKind::kalman, {},
                       sc.init.x_prior, sc.init.P_prior);
  auto hf = run_filter(sc.system, trace.y, trace.u, FilterKind::hinf,
                       HinfConfig<double>::identity(1e-12), sc.init.x_prior,
                       sc.init.P_prior);
  double worst = 0.0;
  for (Index k = 0; k < kf.length(); ++k) {
    worst = std::max(worst, (kf.gain[k] - hf.gain[k]).cwiseAbs().maxCoeff());
    worst = std::max(worst, (kf.P_post[k] - hf.P_post[k]).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "max gain/covariance gap " << worst << " over 200 steps (tol 1e-8)";
  detail = os.str();
  return worst <= 1e-8;
}

// --- 3: fault effect on the innovation -------------------------------------

bool fault_effect_identity(std::string& detail) {
  const VectorX<double> theta = vec2(1.5, 0.0);
  auto sc = paper_scenario();
  auto fault = FaultModel<double>::impulse(201, theta);
  double worst = 0.0;
  for (FilterKind kind : {FilterKind::kalman, FilterKind::hinf}) {
    const double alpha = kind == FilterKind::hinf ? 60.0 : 0.0;
    auto faulty_trace = simulate(sc.system, sc.controller.build(), sc.noise, fault,
                                 sc.horizon, 19, sc.init.x0);
    auto clean_trace =
        simulate(sc.system, sc.controller.build(), sc.noise,
                 FaultModel<double>::none_fault(), sc.horizon, 19, sc.init.x0);
    auto faulty = run_filter(sc.system, faulty_trace.y, faulty_trace.u, kind,
                             HinfConfig<double>::identity(alpha), sc.init.x_prior,
                             sc.init.P_prior);
    auto clean = run_filter(sc.system, clean_trace.y, clean_trace.u, kind,
                            HinfConfig<double>::identity(alpha), sc.init.x_prior,
                            sc.init.P_prior);
    auto hyp = FaultHypothesis<double>::impulse();
    auto tracker = FaultTracker<double>::start(201, 2, 2);
    for (Index k = 0; k < faulty.length(); ++k) {
      const VectorX<double> predicted = sc.system.C(k) * tracker.transfer * theta;
      const VectorX<double> actual = faulty.innovation[k] - clean.innovation[k];
      worst = std::max(worst, (actual - predicted).cwiseAbs().maxCoeff());
      gamma_step(tracker, sc.system.A(k), faulty.gain[k], sc.system.C(k),
                 hyp.profile_at(k, 201, 2));
    }
  }
  std::ostringstream os;
  os << "max |eps_f - eps_0 - C Gamma theta| = " << worst
     << " (both filters, tol 1e-9)";
  detail = os.str();
  return worst <= 1e-9;
}

// --- 4: recursion equals batch sums -----------------------------------------

bool recursive_batch_equality(std::string& detail) {
  auto sc = paper_scenario();
  auto fault = FaultModel<double>::impulse(201, vec2(1.5, 0.0));
  auto trace = simulate(sc.system, sc.controller.build(), sc.noise, fault,
                        sc.horizon, 8, sc.init.x0);
  auto run = run_filter(sc.system, trace.y, trace.u, FilterKind::hinf,
                        sc.filter.hinf(), sc.init.x_prior, sc.init.P_prior);
  auto hyp = FaultHypothesis<double>::impulse();

  // Independent transfer recursion feeding explicit batch sums.
  std::vector<MatrixX<double>> gamma;
  gamma.push_back(MatrixX<double>::Zero(2, 2));
  for (Index k = 0; k < run.length(); ++k)
    gamma.push_back(sc.system.A(k) *
                        (MatrixX<double>::Identity(2, 2) -
                         run.gain[k] * sc.system.C(k)) *
                        gamma.back() +
                    hyp.profile_at(k, 201, 2));

  auto tracker = FaultTracker<double>::start(201, 2, 2);
  MatrixX<double> batch_info = MatrixX<double>::Zero(2, 2);
  VectorX<double> batch_score = VectorX<double>::Zero(2);
  double worst = 0.0;
  for (Index k = 0; k < run.length(); ++k) {
    accumulate(tracker, sc.system.C(k), run.sigma[k], run.innovation[k]);
    gamma_step(tracker, sc.system.A(k), run.gain[k], sc.system.C(k),
               hyp.profile_at(k, 201, 2));
    const MatrixX<double> ct = sc.system.C(k) * gamma[k];
    const MatrixX<double> sinv = run.sigma[k].inverse();
    batch_info += ct.transpose() * sinv * ct;
    batch_score += ct.transpose() * sinv * run.innovation[k];
    worst = std::max(worst, (tracker.info - batch_info).cwiseAbs().maxCoeff());
    worst = std::max(worst, (tracker.score - batch_score).cwiseAbs().maxCoeff());
    if (symmetric_eigen_bounds(batch_info).first > 1e-9) {
      const VectorX<double> theta_batch = batch_info.inverse() * batch_score;
      const double h_batch = batch_score.dot(batch_info.inverse() * batch_score);
      worst = std::max(worst,
                       (estimate_theta(tracker) - theta_batch).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(gir(tracker) - h_batch));
    }
  }
  std::ostringstream os;
  os << "max recursion/batch gap " << worst << " over 400 steps (tol 1e-9)";
  detail = os.str();
  return worst <= 1e-9;
}

// --- 5: noise-free exact recovery -------------------------------------------

bool noise_free_recovery(std::string& detail) {
  auto sc = paper_scenario();
  sc.noise = NoiseModel<double>(NoiseKind::none, 0);
  auto out = run_scenario(sc, 0, sc.filter);
  const double theta_err =
      (out.report.final_theta - vec2(1.5, 0.0)).cwiseAbs().maxCoeff();
  std::ostringstream os;
  os << "r_hat = " << out.report.final_r_hat << " (want 201), |theta_hat - theta| = "
     << theta_err << " (tol 1e-8)";
  detail = os.str();
  return out.report.final_r_hat == 201 && theta_err <= 1e-8;
}

// --- 6: alpha = 0 detector degenerates to the Kalman-driven one -------------

bool glr_degeneracy(std::string& detail) {
  auto sc = paper_scenario();
  FilterConfig kalman;
  kalman.kind = FilterKind::kalman;
  FilterConfig alpha0;
  alpha0.kind = FilterKind::hinf;
  alpha0.alpha = 0.0;
  auto a = run_scenario(sc, 33, kalman);
  auto b = run_scenario(sc, 33, alpha0);
  double worst = 0.0;
  bool same_r = true;
  for (Index k = 0; k < a.report.length(); ++k) {
    worst = std::max(worst, std::abs(a.report.h[k] - b.report.h[k]));
    worst = std::max(
        worst, (a.report.theta_hat[k] - b.report.theta_hat[k]).cwiseAbs().maxCoeff());
    same_r = same_r && a.report.r_hat[k] == b.report.r_hat[k];
  }
  std::ostringstream os;
  os << "max per-step gap " << worst << ", onset estimates "
     << (same_r ? "identical" : "DIFFER") << " (tol 1e-9)";
  detail = os.str();
  return worst <= 1e-9 && same_r;
}

// --- 7: desk-scale robustness comparison ------------------------------------

bool robustness_rates(std::string& detail) {
  auto sc = paper_scenario();
  sc.fault = FaultModel<double>::impulse(201, vec2(0.6, 0.0));
  FilterConfig kalman;
  kalman.kind = FilterKind::kalman;
  const Index n_seeds = 100;

  struct Rates {
    double detect = 0.0, false_alarm = 0.0, tau = 0.0;
  };
  auto evaluate = [&](const FilterConfig& filter) {
    Rates rates;
    rates.tau = calibrate_threshold(sc, filter, 100, 1000, sc.detector.calib_c);
    ScenarioConfig clean = sc;
    clean.fault = FaultModel<double>::none_fault();
    std::vector<char> detected(n_seeds, 0), alarmed(n_seeds, 0);
    parallel_for(n_seeds, [&](Index i) {
      auto faulty =
          run_scenario(sc, 3000 + static_cast<std::uint64_t>(i), filter, rates.tau);
      for (const auto& alarm : faulty.report.alarms)
        if (alarm.step > sc.fault.onset) detected[i] = 1;
      auto ff =
          run_scenario(clean, 2000 + static_cast<std::uint64_t>(i), filter, rates.tau);
      alarmed[i] = ff.report.alarms.empty() ? 0 : 1;
    });
    for (Index i = 0; i < n_seeds; ++i) {
      rates.detect += detected[i];
      rates.false_alarm += alarmed[i];
    }
    rates.detect /= n_seeds;
    rates.false_alarm /= n_seeds;
    return rates;
  };

  const Rates kf = evaluate(kalman);
  const Rates hf = evaluate(sc.filter);
  std::ostringstream os;
  os << "detect: hinf " << hf.detect << " vs kalman " << kf.detect
     << "; false alarms: hinf " << hf.false_alarm << " vs kalman " << kf.false_alarm
     << "; tau: hinf " << hf.tau << ", kalman " << kf.tau
     << " (want hinf detect > kalman detect, hinf FA <= 0.05)";
  detail = os.str();
  return hf.detect > kf.detect && hf.false_alarm <= 0.05;
}

// --- 8: feasibility guard ----------------------------------------------------

// The full-run feasibility boundary for the benchmark configuration sits in
// (95, 96): alpha = 95 completes 400 steps, alpha = 96 dies. Pinned from a
// bisection over whole-run feasibility; see the alpha = 96 expectation below.
constexpr double kExcessiveAlpha = 96.0;
constexpr Index kExcessiveAlphaStep = 1;

bool feasibility_guard(std::string& detail) {
  auto sc = paper_scenario();
  auto trace = simulate(sc.system, sc.controller.build(), sc.noise, sc.fault,
                        sc.horizon, 12, sc.init.x0);
  bool alpha60_ok = true;
  try {
    auto run = run_filter(sc.system, trace.y, trace.u, FilterKind::hinf,
                          sc.filter.hinf(), sc.init.x_prior, sc.init.P_prior);
    alpha60_ok = run.length() == sc.horizon;
  } catch (const InfeasibilityError&) {
    alpha60_ok = false;
  }

  bool excessive_throws = false;
  Index thrown_step = -1;
  try {
    run_filter(sc.system, trace.y, trace.u, FilterKind::hinf,
               HinfConfig<double>::identity(kExcessiveAlpha), sc.init.x_prior,
               sc.init.P_prior);
  } catch (const InfeasibilityError& e) {
    excessive_throws = true;
    thrown_step = e.step;
  }
  std::ostringstream os;
  os << "alpha=60 completed 400 steps: " << (alpha60_ok ? "yes" : "NO")
     << "; alpha=" << kExcessiveAlpha << " infeasible at step " << thrown_step
     << " (want " << kExcessiveAlphaStep << ")";
  detail = os.str();
  return alpha60_ok && excessive_throws && thrown_step == kExcessiveAlphaStep;
}

// --- 9: byte-identical reproduction ------------------------------------------

bool reproduction_determinism(std::string& detail) {
  const fs::path dir1 = fs::temp_directory_path() / "ltvs_accept_repro1";
  const fs::path dir2 = fs::temp_directory_path() / "ltvs_accept_repro2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  auto run_once = [](const fs::path& dir) {
    const std::string out = dir.string();
    const char* argv[] = {"ltv-sentinel", "reproduce-paper", "--out", out.c_str(),
                          "--seeds", "20"};
    return run_cli(6, argv);
  };
  if (run_once(dir1) != 0 || run_once(dir2) != 0) {
    detail = "reproduce-paper exited nonzero";
    return false;
  }
  int files = 0;
  bool identical = true;
  for (const auto& entry : fs::directory_iterator(dir1)) {
    ++files;
    identical = identical && read_file(entry.path()) ==
                                 read_file(dir2 / entry.path().filename());
  }
  std::ostringstream os;
  os << files << " files compared, " << (identical ? "all identical" : "MISMATCH");
  detail = os.str();
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  return identical && files == 9;  // 8 datasets + manifest
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"KF/minimax regression equivalence on 100 random systems", regression_equivalence},
      {"alpha -> 0 degeneracy over a 200-step run", alpha_zero_limit},
      {"fault-effect identity on paired shared-seed runs", fault_effect_identity},
      {"recursive accumulators equal batch sums over 400 steps", recursive_batch_equality},
      {"noise-free exact recovery of theta and the onset", noise_free_recovery},
      {"alpha = 0 detector equals the Kalman-driven detector", glr_degeneracy},
      {"minimax detection rate exceeds Kalman at theta = [0.6 0]", robustness_rates},
      {"feasibility guard at alpha = 60 and the pinned excessive alpha", feasibility_guard},
      {"byte-identical benchmark reproduction", reproduction_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].check(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %zu: %s — %s\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures == 0)
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
  else
    std::printf("%d acceptance criteria FAILED\n", failures);
  return failures == 0 ? 0 : 1;
}
