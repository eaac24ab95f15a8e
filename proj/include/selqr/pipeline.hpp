#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "selqr/baselines.hpp"
#include "selqr/basis.hpp"
#include "selqr/first_stage.hpp"
#include "selqr/inference.hpp"
#include "selqr/qr_core.hpp"

namespace selqr {

enum class Estimator { Uncorrected, Mar, SemiparametricIv };

std::string_view to_string(Estimator e);
/// Accepts "uncorrected", "mar", "semiparametric_iv"; throws InputError otherwise.
Estimator parse_estimator(std::string_view name);

struct EstimationOptions {
  BasisSettings basis;
  double trim_floor = 0.01;
  InferenceOptions inference;
};

struct EstimateResult {
  Estimator estimator = Estimator::SemiparametricIv;
  double tau = 0.5;
  QuantileSolution solution;
  CovarianceEstimate covariance;
  Vector omega;
  std::optional<FirstStageFit> first_stage;  ///< semiparametric IV only
  std::optional<ProbitFit> probit;           ///< MAR only
};

/// Fits one estimator at one quantile level, including inference.
/// Semiparametric IV: knots from the data, series 2SLS, cone projection,
/// weighted QR with D g_c, plug-in covariance with the first-stage term.
EstimateResult estimate(Estimator estimator, const ObservationSet& data, double tau,
                        const EstimationOptions& options = {});

}  // namespace selqr
