#include "selqr/pipeline.hpp"

#include "selqr/errors.hpp"

namespace selqr {

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::Uncorrected:
      return "uncorrected";
    case Estimator::Mar:
      return "mar";
    case Estimator::SemiparametricIv:
      return "semiparametric_iv";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "uncorrected") return Estimator::Uncorrected;
  if (name == "mar") return Estimator::Mar;
  if (name == "semiparametric_iv") return Estimator::SemiparametricIv;
  throw InputError("unknown estimator '" + std::string(name) + "'");
}

EstimateResult estimate(Estimator estimator, const ObservationSet& data, double tau, const EstimationOptions& options) {
  data.validate();
  EstimateResult out;
  out.estimator = estimator;
  out.tau = tau;
  const Matrix z = quantile_design(data);

  switch (estimator) {
    case Estimator::Uncorrected: {
      out.omega = data.d;
      out.solution = solve(QuantileProblem{z, data.y, out.omega, tau});
      out.covariance = weighted_sandwich(data, out.omega, out.solution, tau, options.inference);
      break;
    }
    case Estimator::Mar: {
      MarWeights mw = mar_ipw_weights(data, options.trim_floor);
      out.omega = std::move(mw.omega);
      out.probit = std::move(mw.probit);
      out.solution = solve(QuantileProblem{z, data.y, out.omega, tau});
      out.covariance = weighted_sandwich(data, out.omega, out.solution, tau, options.inference);
      break;
    }
    case Estimator::SemiparametricIv: {
      const BasisPlan plan = make_plan(data, options.basis);
      out.first_stage = fit_first_stage(data, plan);
      out.omega = weights(*out.first_stage, data).omega;
      out.solution = solve(QuantileProblem{z, data.y, out.omega, tau});
      out.covariance = covariance(*out.first_stage, out.solution, data, tau, options.inference);
      break;
    }
  }
  return out;
}

}  // namespace selqr
