#include "selqr/baselines.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "selqr/errors.hpp"

namespace selqr {

namespace {

double norm_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }
double norm_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

// phi(t) / Phi(t), continued into the far left tail where Phi underflows
double mills(double t) {
  if (t > -30.0) return norm_pdf(t) / norm_cdf(t);
  const double inv = 1.0 / (t * t);
  return -t / (1.0 - inv + 3.0 * inv * inv);
}

double log_norm_cdf(double t) {
  if (t > -30.0) return std::log(norm_cdf(t));
  return -0.5 * t * t - std::log(-t) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Score and Hessian of the probit log-likelihood.
void derivatives(const Vector& d, const Matrix& x, const Vector& gamma, Vector& score, Matrix& hessian) {
  const Vector index = x * gamma;
  Vector lambda(d.size());
  Vector curvature(d.size());
  for (Index i = 0; i < d.size(); ++i) {
    const double t = index(i);
    // generalized residual: phi/Phi for D = 1, -phi/(1 - Phi) for D = 0
    lambda(i) = d(i) == 1.0 ? mills(t) : -mills(-t);
    curvature(i) = lambda(i) * (lambda(i) + t);
  }
  score = x.transpose() * lambda;
  hessian = -(x.transpose() * curvature.asDiagonal() * x);
}

}  // namespace

double probit_log_likelihood(const Vector& d, const Matrix& x, const Vector& gamma) {
  const Vector index = x * gamma;
  double ll = 0.0;
  for (Index i = 0; i < d.size(); ++i) ll += d(i) == 1.0 ? log_norm_cdf(index(i)) : log_norm_cdf(-index(i));
  return ll;
}

ProbitFit probit_fit(const Vector& d, const Matrix& x) {
  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-8;
  if (d.size() != x.rows() || x.cols() < 1) throw InputError("probit: dimension mismatch");
  const double ones = d.sum();
  if (ones == 0.0 || ones == static_cast<double>(d.size())) {
    throw NumericalError("probit: separation detected (selection indicator is constant)");
  }

  ProbitFit fit;
  fit.gamma = Vector::Zero(x.cols());
  fit.log_likelihood = probit_log_likelihood(d, x, fit.gamma);
  Vector score;
  Matrix hessian;
  // An index beyond 8 puts a fitted probability within 1e-15 of 0 or 1; on a
  // finite sample that happens only while the coefficients run off to infinity.
  const auto separated = [&] {
    return fit.log_likelihood > -1e-10 || (x * fit.gamma).lpNorm<Eigen::Infinity>() > 8.0;
  };
  for (fit.iterations = 0; fit.iterations < kMaxIterations; ++fit.iterations) {
    if (separated()) throw NumericalError("probit: separation detected (monotone likelihood)");
    derivatives(d, x, fit.gamma, score, hessian);
    fit.gradient_norm = score.lpNorm<Eigen::Infinity>();
    if (fit.gradient_norm < kTolerance) {
      fit.converged = true;
      return fit;
    }
    const Eigen::LDLT<Matrix> ldlt(-hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericalError("probit: Hessian not negative definite");
    const Vector step = ldlt.solve(score);

    // near the optimum likelihood changes fall below roundoff; accept those steps
    const double slack = 1e-12 * (1.0 + std::abs(fit.log_likelihood));
    double scale = 1.0;
    double candidate_ll = -std::numeric_limits<double>::infinity();
    Vector candidate;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      candidate = fit.gamma + scale * step;
      candidate_ll = probit_log_likelihood(d, x, candidate);
      if (candidate_ll >= fit.log_likelihood - slack) break;
    }
    if (!(candidate_ll >= fit.log_likelihood - slack)) break;
    fit.gamma = candidate;
    fit.log_likelihood = candidate_ll;
  }
  if (separated()) throw NumericalError("probit: separation detected (monotone likelihood)");
  derivatives(d, x, fit.gamma, score, hessian);
  fit.gradient_norm = score.lpNorm<Eigen::Infinity>();
  if (fit.gradient_norm < kTolerance) {
    fit.converged = true;
    return fit;
  }
  std::ostringstream msg;
  msg << "probit: no convergence after " << fit.iterations << " iterations, gradient " << fit.gradient_norm
      << ", gamma = [" << fit.gamma.transpose() << "]";
  throw NumericalError(msg.str());
}

QuantileSolution uncorrected_qr(const ObservationSet& data, double tau) {
  return solve(QuantileProblem{quantile_design(data), data.y, data.d, tau});
}

MarWeights mar_ipw_weights(const ObservationSet& data, double trim_floor) {
  if (!(trim_floor > 0.0 && trim_floor <= 1.0)) throw InputError("trim floor must lie in (0, 1]");
  Matrix x(data.size(), 1 + data.x.cols());
  x.col(0).setOnes();
  x.rightCols(data.x.cols()) = data.x;
  MarWeights out{probit_fit(data.d, x), Vector::Zero(data.size())};
  const Vector index = x * out.probit.gamma;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.selected(i)) out.omega(i) = 1.0 / std::max(norm_cdf(index(i)), trim_floor);
  }
  return out;
}

QuantileSolution mar_ipw_qr(const ObservationSet& data, double tau, double trim_floor) {
  const MarWeights mw = mar_ipw_weights(data, trim_floor);
  return solve(QuantileProblem{quantile_design(data), data.y, mw.omega, tau});
}

}  // namespace selqr
