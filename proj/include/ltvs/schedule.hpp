#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "ltvs/errors.hpp"
#include "ltvs/types.hpp"

namespace ltvs {

/// Piecewise-constant time schedule of a matrix: either a single constant
/// value or a table of (step, value) breakpoints. at(k) returns the entry
/// with the greatest breakpoint <= k, so a table {0: M0, 150: M1} yields M0
/// for k in [0,150) and M1 from k = 150 on.
template <typename Scalar>
class MatrixSchedule {
 public:
  MatrixSchedule() = default;

  static MatrixSchedule constant(MatrixX<Scalar> value) {
    MatrixSchedule s;
    s.entries_.emplace_back(0, std::move(value));
    return s;
  }

  static MatrixSchedule table(std::vector<std::pair<Index, MatrixX<Scalar>>> entries) {
    if (entries.empty()) throw ConfigError("matrix schedule table is empty");
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (entries.front().first != 0)
      throw ConfigError("matrix schedule table must contain a step-0 entry");
    const Index r = entries.front().second.rows();
    const Index c = entries.front().second.cols();
    for (const auto& [k, m] : entries) {
      if (m.rows() != r || m.cols() != c)
        throw DimensionError("matrix schedule entries disagree on shape");
    }
    MatrixSchedule s;
    s.entries_ = std::move(entries);
    return s;
  }

  bool empty() const { return entries_.empty(); }
  bool is_constant() const { return entries_.size() == 1; }
  Index rows() const { return entries_.empty() ? 0 : entries_.front().second.rows(); }
  Index cols() const { return entries_.empty() ? 0 : entries_.front().second.cols(); }

  const MatrixX<Scalar>& at(Index k) const {
    if (entries_.empty()) throw ConfigError("matrix schedule is empty");
    if (entries_.size() == 1) return entries_.front().second;
    auto it = std::upper_bound(
        entries_.begin(), entries_.end(), k,
        [](Index key, const auto& e) { return key < e.first; });
    return std::prev(it)->second;
  }

  const std::vector<std::pair<Index, MatrixX<Scalar>>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<Index, MatrixX<Scalar>>> entries_;  // sorted by step
};

}  // namespace ltvs
