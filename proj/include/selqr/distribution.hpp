#pragma once

#include "selqr/data.hpp"
#include "selqr/first_stage.hpp"

namespace selqr {

/// Weighted step-function CDF over the selected outcomes,
///   F(y) = sum_i 1{Y_i <= y} omega_i,  omega_i = g(Y_i, X_i) / sum_j g(Y_j, X_j).
class CorrectedCDF {
 public:
  /// `outcomes` and nonnegative `mass` of equal length; mass is normalized to sum to 1.
  CorrectedCDF(const Vector& outcomes, const Vector& mass);

  double operator()(double y) const;
  /// Smallest support point y with F(y) >= tau.
  double quantile(double tau) const;

  const Vector& support() const { return support_; }        ///< sorted outcomes
  const Vector& weights() const { return weights_; }        ///< normalized, aligned with support()
  const Vector& cumulative() const { return cumulative_; }  ///< F at each support point

 private:
  Vector support_;
  Vector weights_;
  Vector cumulative_;
};

/// Uses g_c when projected, otherwise g_u. Throws InputError with no selected rows.
CorrectedCDF corrected_cdf(const FirstStageFit& fit, const ObservationSet& data);

/// Unit weights over the selected rows.
CorrectedCDF empirical_cdf(const ObservationSet& data);

double quantile_from_cdf(const CorrectedCDF& cdf, double tau);

}  // namespace selqr
