#pragma once

#include <vector>

#include "selqr/types.hpp"

namespace selqr {

/// rho_tau(u) = u (tau - 1{u < 0}).
template <typename Scalar>
Scalar check_loss(Scalar u, Scalar tau) {
  return u * (tau - (u < Scalar(0) ? Scalar(1) : Scalar(0)));
}

/// psi_tau(u) = tau - 1{u < 0}; psi_tau(0) = tau.
template <typename Scalar>
Scalar quantile_score(Scalar u, Scalar tau) {
  return tau - (u < Scalar(0) ? Scalar(1) : Scalar(0));
}

/// minimize sum_i w_i rho_tau(y_i - z_i' theta).
struct QuantileProblem {
  Matrix z;
  Vector y;
  Vector w;
  double tau = 0.5;

  void validate() const;
};

struct QuantileSolution {
  Vector theta;
  double objective = 0.0;
  std::vector<Index> active_set;  ///< rows of the problem interpolated by theta
  int iterations = 0;
};

/// Weighted check loss at theta. Rows with w_i = 0 are skipped (their y may be NaN).
double weighted_check_loss(const QuantileProblem& problem, const Vector& theta);

/// Exact vertex solution by simplex-type edge descent: from an interpolating
/// basis of d_z rows, release the basic row whose directional derivative is
/// most negative and move along that edge to the weighted-median breakpoint.
/// Pivoting order is deterministic: steepest derivative, ties to the lower
/// basis position; Bland's rule after repeated degenerate pivots.
/// Rows with w_i = 0 never enter. Throws NumericalError on a rank-deficient design.
QuantileSolution solve(const QuantileProblem& problem);

struct SubgradientCertificate {
  bool ok = false;
  double max_violation = 0.0;  ///< distance of 0 from the subgradient interval, worst coordinate
  Index zero_residuals = 0;
};

/// For every coordinate k, sum_{r_i != 0} w_i z_ik psi(r_i) must be offset by
/// some choice of scores in [tau - 1, tau] on the zero residuals. When exactly
/// d_z residuals vanish the joint system is solved as well.
SubgradientCertificate subgradient_certificate(const QuantileProblem& problem, const Vector& theta,
                                               double tol = 1e-8);

}  // namespace selqr
