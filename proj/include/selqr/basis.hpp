#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "selqr/data.hpp"
#include "selqr/types.hpp"

namespace selqr {

/// Clamped B-spline knot vector: boundary knots repeated degree + 1 times.
struct KnotVector {
  int degree = 2;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> interior;

  Index basis_count() const { return degree + 1 + static_cast<Index>(interior.size()); }

  /// Full clamped sequence of length basis_count() + degree + 1.
  std::vector<double> full_knots() const;

  /// Throws InputError unless lo < hi and the interior knots are strictly
  /// increasing inside (lo, hi).
  void validate() const;
};

/// Boundary at [min, max] of `values`; interior knots at the empirical
/// quantiles k / (n_interior + 1), k = 1..n_interior.
KnotVector make_knots(std::span<const double> values, int n_interior, int degree);

/// Evaluates all basis functions at `x` (clamped to [lo, hi]) into `out`,
/// which must have basis_count() entries.
template <typename Scalar, typename Derived>
void eval_basis_into(const KnotVector& kv, Scalar x, Eigen::MatrixBase<Derived> const& out_) {
  auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_);
  const int p = kv.degree;
  const Index nb = kv.basis_count();
  const std::vector<double> t = kv.full_knots();
  x = std::clamp(x, Scalar(kv.lo), Scalar(kv.hi));

  // knot span s with t[s] <= x < t[s+1]; the right boundary belongs to the last span
  Index s = nb - 1;
  if (x < Scalar(kv.hi)) {
    const auto it = std::upper_bound(t.begin() + p, t.begin() + nb + 1, static_cast<double>(x));
    s = static_cast<Index>(it - t.begin()) - 1;
  }

  // Cox-de Boor triangle over the p + 1 functions supported on span s
  std::vector<Scalar> nz(p + 1), left(p + 1), right(p + 1);
  nz[0] = Scalar(1);
  for (int j = 1; j <= p; ++j) {
    left[j] = x - Scalar(t[s + 1 - j]);
    right[j] = Scalar(t[s + j]) - x;
    Scalar saved(0);
    for (int r = 0; r < j; ++r) {
      const Scalar tmp = nz[r] / (right[r + 1] + left[j - r]);
      nz[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    nz[j] = saved;
  }
  out.setZero();
  for (int r = 0; r <= p; ++r) out(s - p + r) = nz[r];
}

template <typename Scalar>
VectorX<Scalar> eval_basis(const KnotVector& kv, Scalar x) {
  VectorX<Scalar> out(kv.basis_count());
  eval_basis_into(kv, x, out);
  return out;
}

/// Assembly rule for the first-stage designs.
///
/// phi^J(y, x) = [outcome spline(y) | x]   (J columns)
/// b^K(w, x)   = [spline(w_1) | spline(w_2) minus first column | ... | x]   (K columns)
///
/// Spline blocks form a partition of unity, so every block after the first in
/// a design drops its first column to keep the columns linearly independent.
/// Instrument splines expand the leading W columns; W columns beyond
/// `instruments.size()` do not enter b^K. `intercept` prepends a constant
/// column to both designs and is only valid when no spline block is present.
struct BasisPlan {
  std::optional<KnotVector> outcome;
  std::vector<KnotVector> instruments;
  Index n_linear = 0;
  bool intercept = false;

  Index J() const;
  Index K() const;
  void validate() const;

  /// phi^J(y, x).
  Vector outcome_row(double y, const Eigen::Ref<const RowVector>& x) const;
  /// b^K(w, x).
  Vector instrument_row(const Eigen::Ref<const RowVector>& w, const Eigen::Ref<const RowVector>& x) const;
};

/// Spline degrees and interior knot counts for the default plan.
struct BasisSettings {
  int y_degree = 2;
  int y_interior_knots = 0;
  int w_degree = 2;
  int w_interior_knots = 2;
};

/// Knots placed from the data: the outcome spline on the selected outcomes,
/// one instrument spline per W column; all X columns linear.
BasisPlan make_plan(const ObservationSet& data, const BasisSettings& settings = {});

struct DesignMatrices {
  Matrix phi;   ///< n x J, rows pre-multiplied by D_i
  Matrix b;     ///< n x K
  Vector mask;  ///< D
};

DesignMatrices build_designs(const ObservationSet& data, const BasisPlan& plan);

}  // namespace selqr
