#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "ltvs/errors.hpp"
#include "ltvs/filters.hpp"
#include "ltvs/model.hpp"
#include "ltvs/types.hpp"

namespace ltvs {

/// eps_k = y_k - C_k x_prior - D_k u_k
template <typename Scalar>
VectorX<Scalar> innovation(const VectorX<Scalar>& y,
                           const Arg<VectorX<Scalar>>& x_prior,
                           const Arg<MatrixX<Scalar>>& C,
                           const Arg<MatrixX<Scalar>>& D,
                           const Arg<VectorX<Scalar>>& u) {
  detail::require(C.rows() == y.size() && C.cols() == x_prior.size(),
                  "C has wrong shape");
  detail::require(D.rows() == y.size() && D.cols() == u.size(), "D has wrong shape");
  VectorX<Scalar> eps = y - C * x_prior;
  if (u.size() > 0) eps -= D * u;
  return eps;
}

/// Sigma_k = C P_prior C^T + R
template <typename Scalar>
MatrixX<Scalar> innovation_covariance(const MatrixX<Scalar>& C,
                                      const Arg<MatrixX<Scalar>>& P_prior,
                                      const Arg<MatrixX<Scalar>>& R) {
  MatrixX<Scalar> sig = C * P_prior * C.transpose() + R;
  symmetrize(sig);
  return sig;
}

/// Running state of one onset candidate r:
///   transfer   the fault-to-innovation transfer matrix, zero through step r
///   info       sum of (C transfer)^T Sigma^{-1} (C transfer) since r+1
///   score      sum of (C transfer)^T Sigma^{-1} eps since r+1
/// The fault estimate is info^{-1} score and the detection statistic is
/// score^T info^{-1} score.
template <typename Scalar>
struct FaultTracker {
  Index onset = 0;  // candidate r
  MatrixX<Scalar> transfer;
  MatrixX<Scalar> info;
  VectorX<Scalar> score;

  static FaultTracker start(Index onset, Index n, Index m) {
    FaultTracker t;
    t.onset = onset;
    t.transfer = MatrixX<Scalar>::Zero(n, m);
    t.info = MatrixX<Scalar>::Zero(m, m);
    t.score = VectorX<Scalar>::Zero(m);
    return t;
  }
};

/// Advances the transfer matrix one step with the gain actually applied:
/// transfer <- A (I - K C) transfer + profile_k.
template <typename Scalar>
void gamma_step(FaultTracker<Scalar>& tracker, const Arg<MatrixX<Scalar>>& A,
                const Arg<MatrixX<Scalar>>& K, const Arg<MatrixX<Scalar>>& C,
                const Arg<MatrixX<Scalar>>& profile_k) {
  const Index n = tracker.transfer.rows();
  detail::require(profile_k.rows() == n && profile_k.cols() == tracker.transfer.cols(),
                  "fault profile has wrong shape");
  tracker.transfer = A * (tracker.transfer - K * (C * tracker.transfer)) + profile_k;
}

/// Folds one innovation into the candidate's accumulators:
///   info  += (C transfer)^T Sigma^{-1} (C transfer)
///   score += (C transfer)^T Sigma^{-1} eps
template <typename Scalar>
void accumulate(FaultTracker<Scalar>& tracker, const Arg<MatrixX<Scalar>>& C,
                const Arg<MatrixX<Scalar>>& sigma, const Arg<VectorX<Scalar>>& eps) {
  Eigen::LLT<MatrixX<Scalar>> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("innovation covariance not positive definite");
  const MatrixX<Scalar> ct = C * tracker.transfer;  // p x m
  tracker.info.noalias() += ct.transpose() * llt.solve(ct);
  tracker.score.noalias() += ct.transpose() * llt.solve(eps);
  symmetrize(tracker.info);
}

namespace detail {

/// (ok, lambda_min, lambda_max): ok iff info is invertible within the
/// condition cap.
template <typename Scalar>
std::pair<bool, std::pair<Scalar, Scalar>> info_invertible(const MatrixX<Scalar>& info) {
  const auto bounds = symmetric_eigen_bounds(info);
  const bool ok = bounds.first > Scalar(kPdTol) &&
                  bounds.second / bounds.first <= Scalar(kConditionCap);
  return {ok, bounds};
}

template <typename Scalar>
VectorX<Scalar> info_solve(const MatrixX<Scalar>& info, const VectorX<Scalar>& rhs) {
  if (info.rows() == 1) return rhs / info(0, 0);
  if (info.rows() == 2) {
    const Scalar det = info(0, 0) * info(1, 1) - info(0, 1) * info(1, 0);
    VectorX<Scalar> out(2);
    out(0) = (info(1, 1) * rhs(0) - info(0, 1) * rhs(1)) / det;
    out(1) = (info(0, 0) * rhs(1) - info(1, 0) * rhs(0)) / det;
    return out;
  }
  return Eigen::LDLT<MatrixX<Scalar>>(info).solve(rhs);
}

}  // namespace detail

/// Weighted least-squares estimate of the fault vector, info^{-1} score.
/// Throws NotIdentifiableError when info is singular or its condition
/// number exceeds the cap.
template <typename Scalar>
VectorX<Scalar> estimate_theta(const FaultTracker<Scalar>& tracker) {
  const auto [ok, bounds] = detail::info_invertible(tracker.info);
  if (!ok)
    throw NotIdentifiableError(
        "fault information matrix singular or ill-conditioned; "
        "excitation insufficient to identify the fault vector");
  return detail::info_solve(tracker.info, tracker.score);
}

/// Detection statistic score^T info^{-1} score (non-negative whenever info
/// is positive definite).
template <typename Scalar>
Scalar gir(const FaultTracker<Scalar>& tracker) {
  const auto [ok, bounds] = detail::info_invertible(tracker.info);
  if (!ok)
    throw NotIdentifiableError("fault information matrix singular or ill-conditioned");
  return tracker.score.dot(detail::info_solve(tracker.info, tracker.score));
}

/// Log-energy-ratio diagnostic: e * ln(total / (total - explained)). This
/// is a companion readout, not the detection statistic itself; the two
/// agree only in degenerate cases.
template <typename Scalar>
Scalar gir_log_ratio(Scalar total_energy, Scalar explained) {
  const Scalar residual = total_energy - explained;
  if (!(total_energy > Scalar(0)) || !(residual > Scalar(0))) return Scalar(0);
  return std::exp(Scalar(1)) * std::log(total_energy / residual);
}

/// One step of the excitation history used by the persistence test.
template <typename Scalar>
struct ExcitationRecord {
  MatrixX<Scalar> transfer;
  MatrixX<Scalar> C;
  MatrixX<Scalar> sigma;
};

/// True iff the windowed sum of (C transfer)^T Sigma^{-1} (C transfer) over
/// the last `window` records has smallest eigenvalue >= threshold. Throws
/// InsufficientDataError when fewer than `window` records are available.
template <typename Scalar>
bool persistent_excitation(std::span<const ExcitationRecord<Scalar>> history,
                           Scalar threshold, Index window) {
  if (window < 1) throw ConfigError("excitation window must be at least 1");
  if (!(threshold > Scalar(0)))
    throw ConfigError("excitation threshold must be positive");
  if (static_cast<Index>(history.size()) < window)
    throw InsufficientDataError("fewer excitation records than the window");
  const Index m = history.back().transfer.cols();
  MatrixX<Scalar> sum = MatrixX<Scalar>::Zero(m, m);
  for (std::size_t i = history.size() - static_cast<std::size_t>(window);
       i < history.size(); ++i) {
    const auto& rec = history[i];
    Eigen::LLT<MatrixX<Scalar>> llt(rec.sigma);
    if (llt.info() != Eigen::Success)
      throw NumericalError("innovation covariance not positive definite");
    const MatrixX<Scalar> ct = rec.C * rec.transfer;
    sum.noalias() += ct.transpose() * llt.solve(ct);
  }
  symmetrize(sum);
  return symmetric_eigen_bounds(sum).first >= threshold;
}

/// Alarm: the statistic met the threshold at `step` with the scan's best
/// candidate `onset`.
template <typename Scalar>
struct Alarm {
  Index step = 0;
  Index onset = -1;
  Scalar value = Scalar(0);
};

/// Thresholding of a statistic series: alarms where h >= tau (zero values
/// never alarm), and the series with sub-threshold values set to zero.
template <typename Scalar>
struct ThresholdResult {
  std::vector<Index> steps;
  std::vector<Scalar> thresholded;
};

template <typename Scalar>
ThresholdResult<Scalar> threshold_alarms(const std::vector<Scalar>& h, Scalar tau) {
  if (std::isnan(tau) || tau < Scalar(0))
    throw ConfigError("threshold must be non-negative");
  ThresholdResult<Scalar> out;
  out.thresholded.resize(h.size(), Scalar(0));
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k] >= tau && h[k] > Scalar(0)) {
      out.steps.push_back(static_cast<Index>(k));
      out.thresholded[k] = h[k];
    }
  }
  return out;
}

/// Result of one onset scan: the winning candidate, its statistic and fault
/// estimate, plus the statistic of every admissible candidate.
template <typename Scalar>
struct ScanResult {
  Index r_hat = -1;
  Scalar h = Scalar(0);
  VectorX<Scalar> theta_hat;
  std::vector<std::pair<Index, Scalar>> per_candidate;
};

namespace detail {

template <typename Scalar>
std::optional<ScanResult<Scalar>> try_onset_scan(
    const std::deque<FaultTracker<Scalar>>& bank, Index k, Index min_gap) {
  ScanResult<Scalar> best;
  bool found = false;
  for (const auto& tracker : bank) {
    if (tracker.onset > k - min_gap) continue;
    const auto [ok, bounds] = info_invertible(tracker.info);
    if (!ok) continue;  // singular candidates are skipped
    const Scalar h =
        tracker.score.dot(info_solve(tracker.info, tracker.score));
    best.per_candidate.emplace_back(tracker.onset, h);
    if (!found || h > best.h) {  // ties keep the earliest candidate
      found = true;
      best.h = h;
      best.r_hat = tracker.onset;
      best.theta_hat = info_solve(tracker.info, tracker.score);
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace detail

/// Picks argmax_r of the statistic over candidates with r <= k - min_gap,
/// ties broken toward the smallest r. Throws NoCandidateError when no
/// candidate has an invertible information matrix.
template <typename Scalar>
ScanResult<Scalar> onset_scan(const std::deque<FaultTracker<Scalar>>& bank, Index k,
                              Index min_gap) {
  auto res = detail::try_onset_scan(bank, k, min_gap);
  if (!res) {
    std::ostringstream os;
    os << "no admissible onset candidate at step " << k;
    throw NoCandidateError(os.str());
  }
  return *res;
}

/// Structural hypothesis the detector scans for: impulse (identity profile,
/// m = n) or step (given base profile, switched on at the candidate onset).
template <typename Scalar>
struct FaultHypothesis {
  FaultKind kind = FaultKind::impulse;
  MatrixSchedule<Scalar> profile;  // step hypothesis only

  static FaultHypothesis impulse() { return FaultHypothesis{}; }

  static FaultHypothesis step(MatrixSchedule<Scalar> profile) {
    FaultHypothesis h;
    h.kind = FaultKind::step;
    h.profile = std::move(profile);
    return h;
  }

  Index fault_dim(Index n) const {
    return kind == FaultKind::impulse ? n : profile.cols();
  }

  MatrixX<Scalar> profile_at(Index k, Index onset, Index n) const {
    if (kind == FaultKind::impulse)
      return k == onset ? MatrixX<Scalar>::Identity(n, n).eval()
                        : MatrixX<Scalar>::Zero(n, n).eval();
    const MatrixX<Scalar>& base = profile.at(k);
    return k >= onset ? base : MatrixX<Scalar>::Zero(base.rows(), base.cols()).eval();
  }
};

/// Detector settings. `window` bounds the candidate bank (candidates older
/// than k - window retire); `min_gap` is both the persistence window and
/// the youngest admissible candidate age; `tau` of +inf disables alarms.
/// Setting known_onset replaces the scan with a single fixed candidate.
template <typename Scalar>
struct DetectorParams {
  Index min_gap = 20;                                     // s
  Scalar pe_threshold = Scalar(1e-6);                     // gamma
  Index window = 100;                                     // candidate span
  Scalar tau = std::numeric_limits<Scalar>::infinity();   // alarm threshold
  std::optional<Index> known_onset;
};

/// Full per-run detector output. Steps with no admissible candidate carry
/// h = 0, r_hat = -1 and a zero fault estimate. The final_* fields summarize
/// the run at the step where the statistic peaked; pe_satisfied reports
/// whether the excitation sum over the first min_gap steps after the
/// reported onset met the threshold.
template <typename Scalar>
struct DetectionReport {
  std::vector<Scalar> h;
  std::vector<Scalar> log_ratio;            // diagnostic companion series
  std::vector<VectorX<Scalar>> theta_hat;
  std::vector<Index> r_hat;
  std::vector<Alarm<Scalar>> alarms;
  Scalar tau = std::numeric_limits<Scalar>::infinity();
  Index min_gap = 0;
  Scalar pe_threshold = Scalar(0);
  Index window = 0;
  bool pe_satisfied = false;
  Index final_step = -1;
  Index final_r_hat = -1;
  Scalar final_h = Scalar(0);
  VectorX<Scalar> final_theta;

  Index length() const { return static_cast<Index>(h.size()); }
};

/// Runs the onset-scanning detector over a recorded filter pass.
///
/// Per step k: spawn candidate r = k (scan mode, k >= 1), retire candidates
/// older than k - window, fold innovation k into every live candidate,
/// evaluate the statistic over admissible candidates (r <= k - min_gap) and
/// record the argmax, then advance every transfer matrix with gain K_k.
template <typename Scalar>
DetectionReport<Scalar> run_detector(const LtvSystem<Scalar>& system,
                                     const FilterRun<Scalar>& run,
                                     const FaultHypothesis<Scalar>& hypothesis,
                                     const DetectorParams<Scalar>& params) {
  const Index steps = run.length();
  const Index n = system.dims().n;
  const Index m = hypothesis.fault_dim(n);
  if (params.min_gap < 1) throw ConfigError("min_gap must be at least 1");
  if (params.window < params.min_gap)
    throw ConfigError("candidate window must be at least min_gap");

  DetectionReport<Scalar> report;
  report.tau = params.tau;
  report.min_gap = params.min_gap;
  report.pe_threshold = params.pe_threshold;
  report.window = params.window;
  report.h.resize(steps, Scalar(0));
  report.log_ratio.resize(steps, Scalar(0));
  report.theta_hat.assign(steps, VectorX<Scalar>::Zero(m));
  report.r_hat.resize(steps, -1);

  std::deque<FaultTracker<Scalar>> bank;
  // Excitation verdict per candidate (parallel to bank): the transfer is
  // zero through the onset, so the info matrix at step r + min_gap equals
  // the windowed excitation sum over the first min_gap post-onset steps.
  std::deque<char> excited;
  const bool scanning = !params.known_onset.has_value();
  if (!scanning) {
    bank.push_back(FaultTracker<Scalar>::start(*params.known_onset, n, m));
    excited.push_back(0);
  }

  Scalar total_energy = Scalar(0);
  std::vector<char> pe_at_step(steps, 0);

  for (Index k = 0; k < steps; ++k) {
    if (scanning && k >= 1) {
      bank.push_back(FaultTracker<Scalar>::start(k, n, m));
      excited.push_back(0);
    }
    while (scanning && !bank.empty() && bank.front().onset < k - params.window) {
      bank.pop_front();
      excited.pop_front();
    }

    const MatrixX<Scalar>& C = system.C(k);
    const MatrixX<Scalar>& sigma = run.sigma[k];
    const VectorX<Scalar>& eps = run.innovation[k];
    Eigen::LLT<MatrixX<Scalar>> llt(sigma);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "innovation covariance not positive definite at step " << k;
      throw NumericalError(os.str());
    }
    const VectorX<Scalar> sinv_eps = llt.solve(eps);
    total_energy += eps.dot(sinv_eps);

    for (std::size_t i = 0; i < bank.size(); ++i) {
      FaultTracker<Scalar>& t = bank[i];
      const MatrixX<Scalar> ct = C * t.transfer;
      t.info.noalias() += ct.transpose() * llt.solve(ct);
      symmetrize(t.info);
      t.score.noalias() += ct.transpose() * sinv_eps;
      if (k == t.onset + params.min_gap)
        excited[i] =
            symmetric_eigen_bounds(t.info).first >= params.pe_threshold ? 1 : 0;
    }

    auto scan = detail::try_onset_scan(bank, k, params.min_gap);
    if (scan) {
      report.h[k] = scan->h;
      report.r_hat[k] = scan->r_hat;
      report.theta_hat[k] = scan->theta_hat;
      report.log_ratio[k] = gir_log_ratio(total_energy, scan->h);
      if (scan->h >= params.tau && scan->h > Scalar(0))
        report.alarms.push_back({k, scan->r_hat, scan->h});
      for (std::size_t i = 0; i < bank.size(); ++i) {
        if (bank[i].onset == scan->r_hat) {
          pe_at_step[k] = excited[i];
          break;
        }
      }
    }

    for (auto& t : bank) {
      gamma_step(t, system.A(k), run.gain[k], C,
                 hypothesis.profile_at(k, t.onset, n));
    }
  }

  for (Index k = 0; k < steps; ++k) {
    if (report.h[k] > report.final_h || report.final_step < 0) {
      if (report.r_hat[k] < 0) continue;
      report.final_step = k;
      report.final_h = report.h[k];
    }
  }
  if (report.final_step >= 0) {
    report.final_r_hat = report.r_hat[report.final_step];
    report.final_theta = report.theta_hat[report.final_step];
    report.pe_satisfied = pe_at_step[report.final_step] != 0;
  } else {
    report.final_theta = VectorX<Scalar>::Zero(m);
  }
  return report;
}

}  // namespace ltvs
