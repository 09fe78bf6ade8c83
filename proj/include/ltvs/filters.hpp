#pragma once

#include <iostream>
#include <sstream>
#include <utility>
#include <vector>

#include "ltvs/errors.hpp"
#include "ltvs/model.hpp"
#include "ltvs/schedule.hpp"
#include "ltvs/types.hpp"

namespace ltvs {

/// One step of filter state: the prior (x_prior, P_prior) entering step k,
/// and after an update the posterior (x_post, P_post) and the gain used.
/// Covariances are kept symmetric by explicit symmetrization and must stay
/// positive definite on a feasible run.
template <typename Scalar>
struct FilterState {
  Index k = 0;
  VectorX<Scalar> x_prior;
  MatrixX<Scalar> P_prior;
  VectorX<Scalar> x_post;
  MatrixX<Scalar> P_post;
  MatrixX<Scalar> gain;  // n x p, filled by an update

  static FilterState initial(VectorX<Scalar> x0, MatrixX<Scalar> P0) {
    FilterState s;
    s.k = 0;
    s.x_prior = std::move(x0);
    s.P_prior = std::move(P0);
    symmetrize(s.P_prior);
    s.x_post = s.x_prior;
    s.P_post = s.P_prior;
    return s;
  }
};

/// Minimax-filter settings: performance parameter alpha >= 0, the weight
/// S_k on the estimation error of the combination z_k = L_k x_k. Empty
/// schedules resolve to the identity. alpha = 0 recovers the Kalman filter.
template <typename Scalar>
struct HinfConfig {
  Scalar alpha = Scalar(0);
  MatrixSchedule<Scalar> S;
  MatrixSchedule<Scalar> L;

  static HinfConfig identity(Scalar alpha) {
    HinfConfig c;
    c.alpha = alpha;
    return c;
  }

  const MatrixX<Scalar>& S_at(Index k, Index n) const {
    return S.empty() ? identity_cache(n) : S.at(k);
  }
  const MatrixX<Scalar>& L_at(Index k, Index n) const {
    return L.empty() ? identity_cache(n) : L.at(k);
  }

 private:
  static const MatrixX<Scalar>& identity_cache(Index n) {
    thread_local MatrixX<Scalar> id;
    if (id.rows() != n) id = MatrixX<Scalar>::Identity(n, n);
    return id;
  }
};

namespace detail {

/// Symmetric inverse via eigendecomposition; rejects singular input.
/// Valid for any sign-definite symmetric matrix (the regression weights
/// include a negative-definite block).
template <typename Scalar>
MatrixX<Scalar> invert_symmetric(const MatrixX<Scalar>& a, const char* what) {
  MatrixX<Scalar> sym = a;
  symmetrize(sym);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError(what);
  const VectorX<Scalar>& lambda = es.eigenvalues();
  const Scalar scale = std::max(Scalar(1), lambda.cwiseAbs().maxCoeff());
  VectorX<Scalar> inv(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) {
    if (std::abs(lambda(i)) <= Scalar(kPdTol) * scale) throw NumericalError(what);
    inv(i) = Scalar(1) / lambda(i);
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar>
MatrixX<Scalar> spd_inverse(const MatrixX<Scalar>& a, const char* what) {
  Eigen::LLT<MatrixX<Scalar>> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(what);
  return llt.solve(MatrixX<Scalar>::Identity(a.rows(), a.cols()));
}

inline void warn_ill_conditioned(const char* what, double cond) {
  std::cerr << "ltvs: warning: " << what << " condition number " << cond
            << " exceeds 1e12\n";
}

}  // namespace detail

/// P_prior^{-1} - alpha L^T S L + C^T R^{-1} C, the matrix whose positive
/// definiteness makes the minimax update at step k solvable.
template <typename Scalar>
MatrixX<Scalar> hinf_information(const Arg<MatrixX<Scalar>>& P_prior,
                                 const HinfConfig<Scalar>& cfg,
                                 const Arg<MatrixX<Scalar>>& C,
                                 const Arg<MatrixX<Scalar>>& R, Index k = 0) {
  const Index n = P_prior.rows();
  MatrixX<Scalar> info = detail::spd_inverse(P_prior, "prior covariance not positive definite");
  if (cfg.alpha != Scalar(0)) {
    const MatrixX<Scalar>& L = cfg.L_at(k, n);
    const MatrixX<Scalar>& S = cfg.S_at(k, n);
    info -= cfg.alpha * L.transpose() * S * L;
  }
  Eigen::LLT<MatrixX<Scalar>> rllt(R);
  if (rllt.info() != Eigen::Success)
    throw NumericalError("measurement covariance not positive definite");
  info += C.transpose() * rllt.solve(C);
  symmetrize(info);
  return info;
}

/// True iff the step-k information matrix is positive definite (smallest
/// eigenvalue above tolerance). Pure predicate: ill-posed inputs yield
/// false rather than an exception.
template <typename Scalar>
bool hinf_feasible(const Arg<MatrixX<Scalar>>& P_prior, const HinfConfig<Scalar>& cfg,
                   const Arg<MatrixX<Scalar>>& C, const Arg<MatrixX<Scalar>>& R,
                   Index k = 0) {
  try {
    return symmetric_eigen_bounds(hinf_information(P_prior, cfg, C, R, k)).first >
           Scalar(kPdTol);
  } catch (const Error&) {
    return false;
  }
}

/// Measurement update of the Kalman filter:
///
///   K      = P C^T (C P C^T + R)^{-1}
///   x_post = x_prior + K (y - C x_prior - D u)
///   P_post = (I - K C) P_prior
template <typename Scalar>
FilterState<Scalar> kf_update(const FilterState<Scalar>& state,
                              const Arg<VectorX<Scalar>>& y,
                              const Arg<MatrixX<Scalar>>& C,
                              const Arg<MatrixX<Scalar>>& D,
                              const Arg<MatrixX<Scalar>>& R,
                              const Arg<VectorX<Scalar>>& u) {
  const Index n = state.x_prior.size();
  const Index p = y.size();
  detail::require(C.rows() == p && C.cols() == n, "C has wrong shape");
  detail::require(R.rows() == p && R.cols() == p, "R has wrong shape");
  detail::require(D.rows() == p && D.cols() == u.size(), "D has wrong shape");

  MatrixX<Scalar> innov_cov = C * state.P_prior * C.transpose() + R;
  symmetrize(innov_cov);
  Eigen::LLT<MatrixX<Scalar>> llt(innov_cov);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "innovation covariance not positive definite at step " << state.k;
    throw NumericalError(os.str());
  }
  FilterState<Scalar> next = state;
  next.gain = llt.solve(C * state.P_prior).transpose();
  VectorX<Scalar> residual = y - C * state.x_prior;
  if (u.size() > 0) residual -= D * u;
  next.x_post = state.x_prior + next.gain * residual;
  next.P_post = (MatrixX<Scalar>::Identity(n, n) - next.gain * C) * state.P_prior;
  symmetrize(next.P_post);
  return next;
}

/// Measurement update of the minimax filter:
///
///   P_post = (P_prior^{-1} - alpha L^T S L + C^T R^{-1} C)^{-1}
///   K      = P_post C^T R^{-1}
///   x_post = x_prior + K (y - C x_prior - D u)
///
/// Throws InfeasibilityError naming the step when the information matrix is
/// not positive definite (alpha too aggressive for this step).
template <typename Scalar>
FilterState<Scalar> hinf_update(const FilterState<Scalar>& state,
                                const Arg<HinfConfig<Scalar>>& cfg,
                                const Arg<VectorX<Scalar>>& y,
                                const Arg<MatrixX<Scalar>>& C,
                                const Arg<MatrixX<Scalar>>& D,
                                const Arg<MatrixX<Scalar>>& R,
                                const Arg<VectorX<Scalar>>& u) {
  const Index p = y.size();
  detail::require(C.rows() == p && C.cols() == state.x_prior.size(), "C has wrong shape");
  detail::require(R.rows() == p && R.cols() == p, "R has wrong shape");
  detail::require(D.rows() == p && D.cols() == u.size(), "D has wrong shape");

  MatrixX<Scalar> info = hinf_information(state.P_prior, cfg, C, R, state.k);
  const auto [lo, hi] = symmetric_eigen_bounds(info);
  if (lo <= Scalar(kPdTol)) {
    std::ostringstream os;
    os << "minimax update infeasible at step " << state.k
       << " (information matrix eigenvalue " << lo << "); reduce alpha";
    throw InfeasibilityError(os.str(), state.k);
  }
  if (hi / lo > Scalar(kConditionCap))
    detail::warn_ill_conditioned("information matrix", double(hi / lo));

  Eigen::LDLT<MatrixX<Scalar>> ldlt(info);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("information matrix factorization failed");

  FilterState<Scalar> next = state;
  next.P_post = ldlt.solve(MatrixX<Scalar>::Identity(info.rows(), info.cols()));
  symmetrize(next.P_post);
  Eigen::LLT<MatrixX<Scalar>> rllt(R);
  if (rllt.info() != Eigen::Success)
    throw NumericalError("measurement covariance not positive definite");
  next.gain = next.P_post * rllt.solve(C).transpose();
  VectorX<Scalar> residual = y - C * state.x_prior;
  if (u.size() > 0) residual -= D * u;
  next.x_post = state.x_prior + next.gain * residual;
  return next;
}

/// Time update shared by both filters:
///
///   x_prior' = A x_post + B u
///   P_prior' = A P_post A^T + Q
template <typename Scalar>
FilterState<Scalar> predict(const FilterState<Scalar>& state,
                            const Arg<MatrixX<Scalar>>& A,
                            const Arg<MatrixX<Scalar>>& B,
                            const Arg<MatrixX<Scalar>>& Q,
                            const Arg<VectorX<Scalar>>& u) {
  const Index n = state.x_post.size();
  detail::require(A.rows() == n && A.cols() == n, "A has wrong shape");
  detail::require(Q.rows() == n && Q.cols() == n, "Q has wrong shape");
  detail::require(B.rows() == n && B.cols() == u.size(), "B has wrong shape");
  FilterState<Scalar> next;
  next.k = state.k + 1;
  next.x_prior = A * state.x_post;
  if (u.size() > 0) next.x_prior += B * u;
  next.P_prior = A * state.P_post * A.transpose() + Q;
  symmetrize(next.P_prior);
  next.x_post = next.x_prior;
  next.P_post = next.P_prior;
  return next;
}

/// One block of a weighted linear regression: obs = design * x + e with
/// E[e e^T] = weight. Weights must be symmetric and sign-definite but may
/// be negative definite (the regularization block of the minimax filter).
template <typename Scalar>
struct RegressionBlock {
  VectorX<Scalar> obs;
  MatrixX<Scalar> design;
  MatrixX<Scalar> weight;
};

template <typename Scalar>
struct RegressionProblem {
  std::vector<RegressionBlock<Scalar>> blocks;
};

template <typename Scalar>
struct RegressionSolution {
  VectorX<Scalar> estimate;
  MatrixX<Scalar> covariance;
};

/// Stationary point of the block-weighted quadratic cost:
///
///   estimate   = (H^T W^{-1} H)^{-1} H^T W^{-1} m
///   covariance = (H^T W^{-1} H)^{-1}
///
/// over the stacked blocks. Throws InfeasibilityError when the normal
/// matrix H^T W^{-1} H is not positive definite.
template <typename Scalar>
RegressionSolution<Scalar> solve_weighted_regression(
    const RegressionProblem<Scalar>& problem) {
  if (problem.blocks.empty()) throw ConfigError("regression problem has no blocks");
  const Index n = problem.blocks.front().design.cols();
  MatrixX<Scalar> normal = MatrixX<Scalar>::Zero(n, n);
  VectorX<Scalar> rhs = VectorX<Scalar>::Zero(n);
  for (const auto& blk : problem.blocks) {
    detail::require(blk.design.cols() == n, "regression blocks disagree on unknowns");
    detail::require(blk.design.rows() == blk.obs.size(), "block design/obs mismatch");
    detail::require(blk.weight.rows() == blk.obs.size() &&
                        blk.weight.cols() == blk.obs.size(),
                    "block weight has wrong shape");
    MatrixX<Scalar> winv =
        detail::invert_symmetric(blk.weight, "regression weight block is singular");
    normal.noalias() += blk.design.transpose() * winv * blk.design;
    rhs.noalias() += blk.design.transpose() * winv * blk.obs;
  }
  symmetrize(normal);
  const auto [lo, hi] = symmetric_eigen_bounds(normal);
  if (lo <= Scalar(kPdTol))
    throw InfeasibilityError("regression normal matrix not positive definite", -1);
  if (hi / lo > Scalar(kConditionCap))
    detail::warn_ill_conditioned("regression normal matrix", double(hi / lo));
  Eigen::LDLT<MatrixX<Scalar>> ldlt(normal);
  RegressionSolution<Scalar> sol;
  sol.estimate = ldlt.solve(rhs);
  sol.covariance = ldlt.solve(MatrixX<Scalar>::Identity(n, n));
  symmetrize(sol.covariance);
  return sol;
}

/// The Kalman update posed as a weighted regression on [prior; measurement].
template <typename Scalar>
RegressionProblem<Scalar> kf_regression(const FilterState<Scalar>& state,
                                        const Arg<VectorX<Scalar>>& y,
                                        const Arg<MatrixX<Scalar>>& C,
                                        const Arg<MatrixX<Scalar>>& D,
                                        const Arg<MatrixX<Scalar>>& R,
                                        const Arg<VectorX<Scalar>>& u) {
  const Index n = state.x_prior.size();
  VectorX<Scalar> obs = y;
  if (u.size() > 0) obs -= D * u;
  RegressionProblem<Scalar> prob;
  prob.blocks.push_back({state.x_prior, MatrixX<Scalar>::Identity(n, n), state.P_prior});
  prob.blocks.push_back({std::move(obs), C, R});
  return prob;
}

/// The minimax update posed as a weighted regression: the combination block
/// carries the indefinite weight -(1/alpha) S^{-1}. With alpha = 0 the
/// block vanishes and the problem reduces to the Kalman regression.
template <typename Scalar>
RegressionProblem<Scalar> hinf_regression(const FilterState<Scalar>& state,
                                          const Arg<HinfConfig<Scalar>>& cfg,
                                          const Arg<VectorX<Scalar>>& y,
                                          const Arg<MatrixX<Scalar>>& C,
                                          const Arg<MatrixX<Scalar>>& D,
                                          const Arg<MatrixX<Scalar>>& R,
                                          const Arg<VectorX<Scalar>>& u) {
  RegressionProblem<Scalar> prob = kf_regression(state, y, C, D, R, u);
  if (cfg.alpha == Scalar(0)) return prob;
  const Index n = state.x_prior.size();
  const MatrixX<Scalar>& L = cfg.L_at(state.k, n);
  const MatrixX<Scalar>& S = cfg.S_at(state.k, n);
  RegressionBlock<Scalar> combo;
  combo.obs = L * state.x_prior;
  combo.design = L;
  combo.weight =
      (-Scalar(1) / cfg.alpha) *
      detail::invert_symmetric(S, "combination weight S is singular");
  prob.blocks.insert(prob.blocks.begin() + 1, std::move(combo));
  return prob;
}

enum class FilterKind { kalman, hinf };

/// Per-step record of a whole filter pass: innovations, their covariances,
/// the gains actually applied, and the state/covariance trajectories. The
/// detector consumes exactly this.
template <typename Scalar>
struct FilterRun {
  FilterKind kind = FilterKind::kalman;
  Scalar alpha = Scalar(0);
  std::vector<VectorX<Scalar>> innovation;  // eps_k
  std::vector<MatrixX<Scalar>> sigma;       // C P_prior C^T + R
  std::vector<MatrixX<Scalar>> gain;        // K_k
  std::vector<VectorX<Scalar>> x_prior, x_post;
  std::vector<MatrixX<Scalar>> P_prior, P_post;

  Index length() const { return static_cast<Index>(innovation.size()); }
};

/// Runs the chosen filter over recorded outputs/inputs. Defaults: zero
/// initial estimate and identity prior covariance.
template <typename Scalar>
FilterRun<Scalar> run_filter(const LtvSystem<Scalar>& system,
                             const std::vector<VectorX<Scalar>>& y,
                             const std::vector<VectorX<Scalar>>& u,
                             FilterKind kind,
                             const Arg<HinfConfig<Scalar>>& cfg = {},
                             Arg<VectorX<Scalar>> x0 = {},
                             Arg<MatrixX<Scalar>> P0 = {}) {
  const Dimensions& d = system.dims();
  detail::require(u.size() == y.size(), "input and output sequences differ in length");
  if (x0.size() == 0) x0 = VectorX<Scalar>::Zero(d.n);
  if (P0.size() == 0) P0 = MatrixX<Scalar>::Identity(d.n, d.n);

  FilterRun<Scalar> run;
  run.kind = kind;
  run.alpha = kind == FilterKind::hinf ? cfg.alpha : Scalar(0);
  const Index steps = static_cast<Index>(y.size());
  run.innovation.reserve(steps);
  run.sigma.reserve(steps);
  run.gain.reserve(steps);
  run.x_prior.reserve(steps);
  run.x_post.reserve(steps);
  run.P_prior.reserve(steps);
  run.P_post.reserve(steps);

  FilterState<Scalar> state = FilterState<Scalar>::initial(std::move(x0), std::move(P0));
  for (Index k = 0; k < steps; ++k) {
    const MatrixX<Scalar>& C = system.C(k);
    const MatrixX<Scalar>& D = system.D(k);
    const MatrixX<Scalar>& R = system.R(k);
    VectorX<Scalar> eps = y[k] - C * state.x_prior;
    if (d.l > 0) eps -= D * u[k];
    MatrixX<Scalar> sig = C * state.P_prior * C.transpose() + R;
    symmetrize(sig);
    run.x_prior.push_back(state.x_prior);
    run.P_prior.push_back(state.P_prior);
    run.innovation.push_back(std::move(eps));
    run.sigma.push_back(std::move(sig));

    state = kind == FilterKind::hinf
                ? hinf_update(state, cfg, y[k], C, D, R, u[k])
                : kf_update(state, y[k], C, D, R, u[k]);
    run.gain.push_back(state.gain);
    run.x_post.push_back(state.x_post);
    run.P_post.push_back(state.P_post);

    state = predict(state, system.A(k), system.B(k), system.Q(k), u[k]);
  }
  return run;
}

}  // namespace ltvs
