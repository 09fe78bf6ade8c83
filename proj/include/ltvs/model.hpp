#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include "ltvs/errors.hpp"
#include "ltvs/schedule.hpp"
#include "ltvs/types.hpp"

namespace ltvs {

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail

/// Discrete linear time-varying plant
///
///   x_{k+1} = A_k x_k + B_k u_k + w_k
///   y_k     = C_k x_k + D_k u_k + v_k
///
/// with designer covariances Q_k (process) and R_k (measurement). Each
/// matrix may be constant or a per-step table.
template <typename Scalar>
class LtvSystem {
 public:
  LtvSystem() = default;

  LtvSystem(Dimensions dims, MatrixSchedule<Scalar> A, MatrixSchedule<Scalar> B,
            MatrixSchedule<Scalar> C, MatrixSchedule<Scalar> D,
            MatrixSchedule<Scalar> Q, MatrixSchedule<Scalar> R)
      : dims_(dims),
        A_(std::move(A)),
        B_(std::move(B)),
        C_(std::move(C)),
        D_(std::move(D)),
        Q_(std::move(Q)),
        R_(std::move(R)) {
    detail::require(dims_.n >= 1 && dims_.p >= 1 && dims_.l >= 0,
                    "system dimensions must satisfy n >= 1, p >= 1, l >= 0");
    detail::require(A_.rows() == dims_.n && A_.cols() == dims_.n, "A must be n x n");
    detail::require(B_.rows() == dims_.n && B_.cols() == dims_.l, "B must be n x l");
    detail::require(C_.rows() == dims_.p && C_.cols() == dims_.n, "C must be p x n");
    detail::require(D_.rows() == dims_.p && D_.cols() == dims_.l, "D must be p x l");
    detail::require(Q_.rows() == dims_.n && Q_.cols() == dims_.n, "Q must be n x n");
    detail::require(R_.rows() == dims_.p && R_.cols() == dims_.p, "R must be p x p");
  }

  /// Constant system; m defaults to n (the impulse-fault convention).
  static LtvSystem constant(MatrixX<Scalar> A, MatrixX<Scalar> B, MatrixX<Scalar> C,
                            MatrixX<Scalar> D, MatrixX<Scalar> Q, MatrixX<Scalar> R) {
    Dimensions dims;
    dims.n = A.rows();
    dims.l = B.cols();
    dims.p = C.rows();
    dims.m = dims.n;
    return LtvSystem(dims, MatrixSchedule<Scalar>::constant(std::move(A)),
                     MatrixSchedule<Scalar>::constant(std::move(B)),
                     MatrixSchedule<Scalar>::constant(std::move(C)),
                     MatrixSchedule<Scalar>::constant(std::move(D)),
                     MatrixSchedule<Scalar>::constant(std::move(Q)),
                     MatrixSchedule<Scalar>::constant(std::move(R)));
  }

  bool valid() const { return !A_.empty(); }
  const Dimensions& dims() const { return dims_; }

  const MatrixX<Scalar>& A(Index k) const { return A_.at(k); }
  const MatrixX<Scalar>& B(Index k) const { return B_.at(k); }
  const MatrixX<Scalar>& C(Index k) const { return C_.at(k); }
  const MatrixX<Scalar>& D(Index k) const { return D_.at(k); }
  const MatrixX<Scalar>& Q(Index k) const { return Q_.at(k); }
  const MatrixX<Scalar>& R(Index k) const { return R_.at(k); }

  const MatrixSchedule<Scalar>& A_schedule() const { return A_; }
  const MatrixSchedule<Scalar>& B_schedule() const { return B_; }
  const MatrixSchedule<Scalar>& C_schedule() const { return C_; }
  const MatrixSchedule<Scalar>& D_schedule() const { return D_; }
  const MatrixSchedule<Scalar>& Q_schedule() const { return Q_; }
  const MatrixSchedule<Scalar>& R_schedule() const { return R_; }

  /// Noise-covariance sanity at step k: Q_k symmetric PSD, R_k symmetric PD.
  bool noise_covariances_valid_at(Index k, Scalar tol = Scalar(kPdTol)) const {
    const MatrixX<Scalar>& q = Q(k);
    const MatrixX<Scalar>& r = R(k);
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10)) return false;
    if ((r - r.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10)) return false;
    return is_positive_semidefinite(q, tol) && is_positive_definite(r, tol);
  }

 private:
  Dimensions dims_;
  MatrixSchedule<Scalar> A_, B_, C_, D_, Q_, R_;
};

enum class FaultKind { none, step, impulse };

/// Additive actuator-side fault: the state equation gains a term
/// profile_k(r) * theta, where the effective profile is zero before the
/// onset r (step faults) or everywhere except k = r (impulse faults) and
/// theta is constant over the run.
template <typename Scalar>
struct FaultModel {
  FaultKind kind = FaultKind::none;
  Index onset = 0;
  VectorX<Scalar> theta;             // length m
  MatrixSchedule<Scalar> profile;    // step faults: base n x m profile

  static FaultModel none_fault() { return FaultModel{}; }

  static FaultModel impulse(Index onset, VectorX<Scalar> theta) {
    if (onset < 0) throw ConfigError("fault onset must be non-negative");
    FaultModel f;
    f.kind = FaultKind::impulse;
    f.onset = onset;
    f.theta = std::move(theta);
    return f;
  }

  static FaultModel step(Index onset, VectorX<Scalar> theta,
                         MatrixSchedule<Scalar> profile) {
    if (onset < 0) throw ConfigError("fault onset must be non-negative");
    if (profile.cols() != theta.size())
      throw DimensionError("step-fault profile columns must match theta length");
    FaultModel f;
    f.kind = FaultKind::step;
    f.onset = onset;
    f.theta = std::move(theta);
    f.profile = std::move(profile);
    return f;
  }

  Index fault_dim() const { return theta.size(); }
};

/// Effective n x m fault profile at step k: base profile gated by the onset
/// indicator (step) or the Kronecker delta (impulse, identity profile with
/// m = n). The none kind yields an n x 0 matrix.
template <typename Scalar>
MatrixX<Scalar> effective_profile(const FaultModel<Scalar>& fault, Index k, Index n) {
  if (k < 0) throw ConfigError("step index must be non-negative");
  switch (fault.kind) {
    case FaultKind::none:
      return MatrixX<Scalar>::Zero(n, 0);
    case FaultKind::impulse:
      detail::require(fault.theta.size() == n,
                      "impulse fault requires theta of length n");
      return k == fault.onset ? MatrixX<Scalar>::Identity(n, n).eval()
                              : MatrixX<Scalar>::Zero(n, n).eval();
    case FaultKind::step: {
      const MatrixX<Scalar>& base = fault.profile.at(k);
      detail::require(base.rows() == n, "step-fault profile must have n rows");
      return k >= fault.onset ? base
                              : MatrixX<Scalar>::Zero(base.rows(), base.cols()).eval();
    }
  }
  return MatrixX<Scalar>::Zero(n, 0);
}

/// profile_k(r) * theta; the zero n-vector for the none kind.
template <typename Scalar>
VectorX<Scalar> fault_term(const FaultModel<Scalar>& fault, Index k, Index n) {
  if (fault.kind == FaultKind::none) return VectorX<Scalar>::Zero(n);
  return effective_profile(fault, k, n) * fault.theta;
}

enum class NoiseKind { none, gaussian, random_walk };

/// Noise generator for simulation.
///
///   none        w_k = 0, v_k = 0 (noise-free oracles)
///   gaussian    w_k ~ N(0, Q_k), v_k ~ N(0, R_k), mutually independent
///   random_walk v_k ~ N(0, R_k) scalar, w_k = w_{k-1} + coupling * v_k
///               with w_{-1} = 0; the walk reuses the measurement noise as
///               its driver unless independent_driver is set, in which case
///               a separate N(0, R_k) stream drives it
///
/// Identical seeds give identical sequences. Covariance sampling accepts
/// any positive-semidefinite matrix (a zero covariance yields zero noise);
/// an indefinite covariance raises NumericalError.
template <typename Scalar>
class NoiseModel {
 public:
  NoiseModel() : NoiseModel(NoiseKind::none, 0) {}

  NoiseModel(NoiseKind kind, std::uint64_t seed, VectorX<Scalar> coupling = {},
             bool independent_driver = false)
      : kind_(kind),
        seed_(seed),
        independent_driver_(independent_driver),
        coupling_(std::move(coupling)) {
    reset(seed);
  }

  NoiseKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  bool independent_driver() const { return independent_driver_; }
  const VectorX<Scalar>& coupling() const { return coupling_; }

  /// Reseeds the generator and restarts the walk from zero.
  void reset(std::uint64_t seed) {
    seed_ = seed;
    rng_.seed(seed);
    normal_.reset();
    walk_.resize(0);
  }

  /// Draws (w_k, v_k). Stateful: advances both the generator and, for the
  /// random-walk kind, the accumulated walk.
  std::pair<VectorX<Scalar>, VectorX<Scalar>> draw(const LtvSystem<Scalar>& system,
                                                   Index k) {
    const Index n = system.dims().n;
    const Index p = system.dims().p;
    switch (kind_) {
      case NoiseKind::none:
        return {VectorX<Scalar>::Zero(n), VectorX<Scalar>::Zero(p)};
      case NoiseKind::gaussian: {
        VectorX<Scalar> w = sample_gaussian(system.Q(k));
        VectorX<Scalar> v = sample_gaussian(system.R(k));
        return {std::move(w), std::move(v)};
      }
      case NoiseKind::random_walk: {
        detail::require(p == 1, "random-walk noise requires a scalar output");
        if (walk_.size() == 0) walk_ = VectorX<Scalar>::Zero(n);
        VectorX<Scalar> v = sample_gaussian(system.R(k));
        Scalar driver = v(0);
        if (independent_driver_) driver = sample_gaussian(system.R(k))(0);
        const VectorX<Scalar> c =
            coupling_.size() == 0 ? VectorX<Scalar>::Ones(n).eval() : coupling_;
        detail::require(c.size() == n, "coupling vector must have length n");
        walk_ += c * driver;
        return {walk_, std::move(v)};
      }
    }
    return {VectorX<Scalar>::Zero(n), VectorX<Scalar>::Zero(p)};
  }

 private:
  /// Sample N(0, cov) for symmetric positive-semidefinite cov via the
  /// eigendecomposition cov = V diag(lambda) V^T. Small negative
  /// eigenvalues are clamped to zero; genuinely indefinite covariances are
  /// rejected.
  VectorX<Scalar> sample_gaussian(const MatrixX<Scalar>& cov) {
    const Index n = cov.rows();
    detail::require(cov.cols() == n, "covariance must be square");
    VectorX<Scalar> z(n);
    for (Index i = 0; i < n; ++i) z(i) = normal_(rng_);
    if (cov.isZero(Scalar(0))) return VectorX<Scalar>::Zero(n);
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(cov);
    if (es.info() != Eigen::Success)
      throw NumericalError("covariance eigendecomposition failed");
    VectorX<Scalar> lambda = es.eigenvalues();
    const Scalar scale = std::max(Scalar(1), lambda.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i) {
      if (lambda(i) < -Scalar(1e-10) * scale)
        throw NumericalError("noise covariance is not positive semidefinite");
      lambda(i) = lambda(i) > Scalar(0) ? std::sqrt(lambda(i)) : Scalar(0);
    }
    return es.eigenvectors() * lambda.asDiagonal() * z;
  }

  NoiseKind kind_;
  std::uint64_t seed_;
  bool independent_driver_;
  VectorX<Scalar> coupling_;  // empty resolves to all-ones of length n
  std::mt19937_64 rng_;
  std::normal_distribution<Scalar> normal_;
  VectorX<Scalar> walk_;
};

enum class ControllerKind { none, discrete_pi };

/// Output-feedback regulator driving the plant output to zero:
///
///   u_k = -(kp * y_k + ki * sum_{j<=k} y_j)
///
/// The accumulator after step k equals the sum of outputs over 0..k.
/// Requires l == p so the gains act componentwise.
template <typename Scalar>
class Controller {
 public:
  Controller() = default;

  static Controller none() { return Controller{}; }

  static Controller discrete_pi(Scalar kp, Scalar ki) {
    Controller c;
    c.kind_ = ControllerKind::discrete_pi;
    c.kp_ = kp;
    c.ki_ = ki;
    return c;
  }

  ControllerKind kind() const { return kind_; }
  Scalar kp() const { return kp_; }
  Scalar ki() const { return ki_; }
  const VectorX<Scalar>& accumulator() const { return acc_; }

  void reset() { acc_.resize(0); }

  VectorX<Scalar> step(const VectorX<Scalar>& y, Index input_dim) {
    if (kind_ == ControllerKind::none) return VectorX<Scalar>::Zero(input_dim);
    detail::require(input_dim == y.size(),
                    "PI controller requires input and output of equal size");
    if (acc_.size() == 0) acc_ = VectorX<Scalar>::Zero(y.size());
    acc_ += y;
    return -(kp_ * y + ki_ * acc_);
  }

 private:
  ControllerKind kind_ = ControllerKind::none;
  Scalar kp_ = Scalar(0);
  Scalar ki_ = Scalar(0);
  VectorX<Scalar> acc_;
};

/// Ground-truth record of one closed-loop run: states x_0..x_N and the
/// per-step inputs, outputs and noises for k = 0..N-1.
template <typename Scalar>
struct SimulationTrace {
  Dimensions dims;
  std::vector<VectorX<Scalar>> x;  // length N+1
  std::vector<VectorX<Scalar>> u;  // length N
  std::vector<VectorX<Scalar>> y;  // length N
  std::vector<VectorX<Scalar>> w;  // length N
  std::vector<VectorX<Scalar>> v;  // length N
  FaultModel<Scalar> fault;
  std::uint64_t seed = 0;

  Index length() const { return static_cast<Index>(y.size()); }
};

/// x_{k+1} = A_k x_k + B_k u_k + w_k + profile_k(r) theta
template <typename Scalar>
VectorX<Scalar> step_state(const LtvSystem<Scalar>& system,
                           const Arg<FaultModel<Scalar>>& fault, Index k,
                           const Arg<VectorX<Scalar>>& x, const Arg<VectorX<Scalar>>& u,
                           const Arg<VectorX<Scalar>>& w) {
  const Dimensions& d = system.dims();
  detail::require(x.size() == d.n, "state vector has wrong length");
  detail::require(u.size() == d.l, "input vector has wrong length");
  detail::require(w.size() == d.n, "process-noise vector has wrong length");
  VectorX<Scalar> next = system.A(k) * x + w + fault_term(fault, k, d.n);
  if (d.l > 0) next += system.B(k) * u;
  return next;
}

/// y_k = C_k x_k + D_k u_k + v_k
template <typename Scalar>
VectorX<Scalar> measure(const LtvSystem<Scalar>& system, Index k,
                        const Arg<VectorX<Scalar>>& x, const Arg<VectorX<Scalar>>& u,
                        const Arg<VectorX<Scalar>>& v) {
  const Dimensions& d = system.dims();
  detail::require(x.size() == d.n, "state vector has wrong length");
  detail::require(u.size() == d.l, "input vector has wrong length");
  detail::require(v.size() == d.p, "measurement-noise vector has wrong length");
  VectorX<Scalar> y = system.C(k) * x + v;
  if (d.l > 0) y += system.D(k) * u;
  return y;
}

/// Forward-simulates N steps of the closed loop. Deterministic given the
/// seed. Throws DivergenceError naming the first step whose state or output
/// is non-finite.
///
/// With an active controller the feedthrough D_k must be zero (the control
/// law acts on the current output, so a nonzero D would close an algebraic
/// loop).
template <typename Scalar>
SimulationTrace<Scalar> simulate(const LtvSystem<Scalar>& system,
                                 Arg<Controller<Scalar>> controller,
                                 Arg<NoiseModel<Scalar>> noise,
                                 const Arg<FaultModel<Scalar>>& fault, Index horizon,
                                 std::uint64_t seed, Arg<VectorX<Scalar>> x0 = {}) {
  if (horizon < 1) throw ConfigError("simulation horizon must be at least 1");
  const Dimensions& d = system.dims();
  if (x0.size() == 0) x0 = VectorX<Scalar>::Zero(d.n);
  detail::require(x0.size() == d.n, "initial state has wrong length");

  noise.reset(seed);
  controller.reset();

  SimulationTrace<Scalar> trace;
  trace.dims = d;
  trace.fault = fault;
  trace.seed = seed;
  trace.x.reserve(horizon + 1);
  trace.u.reserve(horizon);
  trace.y.reserve(horizon);
  trace.w.reserve(horizon);
  trace.v.reserve(horizon);
  trace.x.push_back(std::move(x0));

  const bool feedback = controller.kind() != ControllerKind::none;
  for (Index k = 0; k < horizon; ++k) {
    auto [w, v] = noise.draw(system, k);
    const VectorX<Scalar>& x = trace.x.back();
    VectorX<Scalar> u, y;
    if (feedback) {
      if (!system.D(k).isZero(Scalar(0)))
        throw ConfigError("feedback control requires zero feedthrough D_k");
      y = system.C(k) * x + v;
      u = controller.step(y, d.l);
    } else {
      u = VectorX<Scalar>::Zero(d.l);
      y = measure(system, k, x, u, v);
    }
    VectorX<Scalar> next = step_state(system, fault, k, x, u, w);
    if (!y.allFinite()) {
      std::ostringstream os;
      os << "non-finite output at step " << k;
      throw DivergenceError(os.str(), k);
    }
    if (!next.allFinite()) {
      std::ostringstream os;
      os << "non-finite state at step " << (k + 1);
      throw DivergenceError(os.str(), k + 1);
    }
    trace.u.push_back(std::move(u));
    trace.y.push_back(std::move(y));
    trace.w.push_back(std::move(w));
    trace.v.push_back(std::move(v));
    trace.x.push_back(std::move(next));
  }
  return trace;
}

/// Free-function form of NoiseModel::draw.
template <typename Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> draw_noise(NoiseModel<Scalar>& noise,
                                                       const LtvSystem<Scalar>& system,
                                                       Index k) {
  return noise.draw(system, k);
}

/// Free-function form of Controller::step.
template <typename Scalar>
VectorX<Scalar> control_step(Controller<Scalar>& controller,
                             const Arg<VectorX<Scalar>>& feedback) {
  return controller.step(feedback, feedback.size());
}

}  // namespace ltvs
