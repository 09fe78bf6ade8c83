#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <type_traits>
#include <utility>

namespace ltvs {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Non-deduced parameter wrapper: the scalar type is deduced from one
// principal argument only, so every other matrix argument may be any Eigen
// expression (it converts on the way in).
template <typename T>
using Arg = std::type_identity_t<T>;

using Index = Eigen::Index;

// Smallest-eigenvalue tolerance for positive-definiteness checks.
inline constexpr double kPdTol = 1e-12;
// Condition-number cap for symmetric solves; beyond it the quantity is
// treated as not identifiable.
inline constexpr double kConditionCap = 1e12;

/// Problem sizes shared by every module: state n, input l, output p,
/// fault-vector m. The fault enters the state equation through an n x m
/// profile, so m may not exceed n.
struct Dimensions {
  Index n = 0;
  Index l = 0;
  Index p = 0;
  Index m = 0;

  bool valid() const { return n >= 1 && l >= 0 && p >= 1 && m >= 1 && m <= n; }
};

template <typename Scalar>
void symmetrize(MatrixX<Scalar>& a) {
  a = (Scalar(0.5) * (a + a.transpose())).eval();
}

/// (min, max) eigenvalues of a symmetric matrix. Sizes 1 and 2 use the
/// closed form; larger sizes fall back to the iterative solver.
template <typename Scalar>
std::pair<Scalar, Scalar> symmetric_eigen_bounds(const MatrixX<Scalar>& a) {
  const Index n = a.rows();
  if (n == 1) return {a(0, 0), a(0, 0)};
  if (n == 2) {
    const Scalar tr = a(0, 0) + a(1, 1);
    const Scalar det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    Scalar disc = tr * tr - Scalar(4) * det;
    disc = disc > Scalar(0) ? std::sqrt(disc) : Scalar(0);
    return {(tr - disc) / Scalar(2), (tr + disc) / Scalar(2)};
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev(0), ev(n - 1)};
}

template <typename Scalar>
bool is_positive_definite(const MatrixX<Scalar>& a, Scalar tol = Scalar(kPdTol)) {
  if (a.rows() != a.cols()) return false;
  return symmetric_eigen_bounds(a).first > tol;
}

template <typename Scalar>
bool is_positive_semidefinite(const MatrixX<Scalar>& a, Scalar tol = Scalar(kPdTol)) {
  if (a.rows() != a.cols()) return false;
  return symmetric_eigen_bounds(a).first > -tol;
}

}  // namespace ltvs
