#pragma once

#include <string>
#include <vector>

#include "selqr/data.hpp"
#include "selqr/first_stage.hpp"
#include "selqr/qr_core.hpp"

namespace selqr {

/// Nadaraya-Watson conditional density with Gaussian product kernels:
///   f(y | v) = sum_j K_hy(y - Y_j) prod_d K_hd(v_d - V_jd) / sum_j prod_d K_hd(v_d - V_jd)
/// Denominators below 1e-12 are floored and counted.
struct KernelDensityResult {
  Vector density;
  Index floored = 0;
};

KernelDensityResult kernel_conditional_density(const Vector& sample_y, const Matrix& sample_v,
                                               const Vector& eval_y, const Matrix& eval_v, double h_y,
                                               const Vector& h_v, unsigned threads = 1);

/// Rule of thumb h_d = 1.06 sigma_d m^(-1 / (4 + q)) for an m x q sample
/// (outcome column included). Throws InputError on a constant column.
Vector default_bandwidths(const Matrix& sample);

/// Least-squares cross-validation of a common multiplier on the rule-of-thumb
/// bandwidths over {0.5, 0.6, ..., 2.0}, using at most 300 evenly strided rows.
Vector cross_validated_bandwidths(const Matrix& sample);

enum class BandwidthMode { RuleOfThumb, CrossValidated };

struct InferenceOptions {
  double level = 0.95;
  BandwidthMode bandwidth = BandwidthMode::RuleOfThumb;
  bool first_stage_correction = true;
  unsigned threads = 1;  ///< workers for the per-row density evaluations
};

/// f_{Y | Omega, Z}(Z_i' theta) for every row (0 where omega_i = 0), estimated on
/// the omega > 0 rows. Conditioning columns with standard deviation < 1e-8
/// (the intercept, a flat Omega) are dropped and named in `dropped`.
struct ConditionalDensity {
  Vector density;
  Vector bandwidths;  ///< outcome first, then retained conditioning columns
  std::vector<std::string> dropped;
  Index floored = 0;
};

ConditionalDensity conditional_density(const ObservationSet& data, const Vector& omega, const Matrix& z,
                                       const Vector& theta, BandwidthMode mode = BandwidthMode::RuleOfThumb,
                                       unsigned threads = 1);
ConditionalDensity conditional_density(const ObservationSet& data, const Vector& omega, const Matrix& z,
                                       const Vector& theta, const Vector& bandwidths, unsigned threads = 1);

struct InfluenceComponents {
  Matrix M1_hat;      ///< E_n[Omega f Z Z'], d_z x d_z
  Matrix T_hat;       ///< E_n[phi D Z' psi(U_tau)], J x d_z
  Matrix HGinvH;      ///< H G^-1 H', J x J
  Matrix projector;   ///< H G^-1, J x K
  Vector Ujhat;       ///< 1 - D phi' beta_u
  Vector psi_res;     ///< psi_tau(Y - Z' theta), 0 where D = 0
  Matrix M0;          ///< n x d_z rows of the influence numerator
};

struct CovarianceEstimate {
  Matrix sigma;  ///< asymptotic covariance of sqrt(n)(theta_hat - theta)
  double level = 0.95;
  Vector se;     ///< sqrt(sigma_kk / n)
  Matrix ci;     ///< d_z x 2
  double min_eigenvalue = 0.0;  ///< before clipping
  InfluenceComponents components;
  ConditionalDensity density;
};

/// Plug-in sandwich M1^-1 E_n[M0 M0'] M1^-1 with
///   M0_i = Z_i Omega_i psi(U_i) + T' (H G^-1 H')^-1 H G^-1 b_i U_J,i.
/// Throws NumericalError "density-weighted design singular" when M1 is singular.
CovarianceEstimate covariance(const FirstStageFit& fit, const QuantileSolution& qsol, const ObservationSet& data,
                              double tau, const InferenceOptions& options = {});

/// Sandwich for known weights (no first-stage term); used for the comparators.
CovarianceEstimate weighted_sandwich(const ObservationSet& data, const Vector& omega, const QuantileSolution& qsol,
                                     double tau, const InferenceOptions& options = {});

/// theta_k -/+ z_{1 - (1 - level) / 2} sqrt(sigma_kk / n), as a d x 2 matrix.
Matrix confidence_intervals(const Vector& theta, const Matrix& sigma, Index n, double level);

}  // namespace selqr
