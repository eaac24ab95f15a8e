#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "selqr/types.hpp"

namespace selqr {

/// Rows (D, Y, W, X). Y is NaN where D == 0.
struct ObservationSet {
  Vector d;  ///< selection indicator, 0 or 1
  Vector y;  ///< outcome, NaN when unobserved
  Matrix w;  ///< instruments, n x p_w
  Matrix x;  ///< controls, n x p_x (may have zero columns)

  Index size() const { return d.size(); }
  Index selected_count() const;
  bool selected(Index i) const { return d(i) != 0.0; }

  /// Throws InputError on shape mismatch, non-binary d or a missing selected outcome.
  void validate() const;
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

/// Quantile regression design Z = (1, X, W), one row per observation.
Matrix quantile_design(const ObservationSet& data);

/// Indices i with D_i = 1, ascending.
std::vector<Index> selected_rows(const ObservationSet& data);

}  // namespace selqr
