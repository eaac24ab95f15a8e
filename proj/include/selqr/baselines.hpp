#pragma once

#include "selqr/data.hpp"
#include "selqr/qr_core.hpp"

namespace selqr {

/// P(D = 1 | X) = Phi(X' gamma).
struct ProbitFit {
  Vector gamma;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  ///< ||score||_inf at return, summed over observations
  double log_likelihood = 0.0;
};

double probit_log_likelihood(const Vector& d, const Matrix& x, const Vector& gamma);

/// Newton-Raphson with step halving, at most 200 iterations, converged when
/// the summed score has sup-norm < 1e-8. `x` must contain the intercept
/// column. Throws NumericalError on separation or non-convergence.
ProbitFit probit_fit(const Vector& d, const Matrix& x);

/// Complete-case quantile regression on Z = (1, X, W): omega_i = D_i.
QuantileSolution uncorrected_qr(const ObservationSet& data, double tau);

struct MarWeights {
  ProbitFit probit;
  Vector omega;  ///< D_i / max(Phi(X_i' gamma), trim_floor)
};

/// Probit of D on (1, X), inverse fitted probabilities on the selected rows.
MarWeights mar_ipw_weights(const ObservationSet& data, double trim_floor = 0.01);

QuantileSolution mar_ipw_qr(const ObservationSet& data, double tau, double trim_floor = 0.01);

}  // namespace selqr
