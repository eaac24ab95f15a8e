#include "selqr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

#include "selqr/errors.hpp"

namespace selqr {

namespace {

constexpr double kDensityFloor = 1e-12;
constexpr double kFlatColumn = 1e-8;

double gaussian(double u, double h) {
  const double s = u / h;
  return std::exp(-0.5 * s * s) / (h * std::sqrt(2.0 * std::numbers::pi));
}

double sample_sd(const Eigen::Ref<const Vector>& col) {
  const double mean = col.mean();
  return std::sqrt((col.array() - mean).square().sum() / static_cast<double>(std::max<Index>(1, col.size() - 1)));
}

// Kernel products K(v_i - V_j) over all conditioning columns, m_eval x m_sample.
Matrix conditioning_weights(const Matrix& sample_v, const Matrix& eval_v, const Vector& h_v) {
  Matrix a = Matrix::Ones(eval_v.rows(), sample_v.rows());
  for (Index c = 0; c < sample_v.cols(); ++c) {
    for (Index i = 0; i < eval_v.rows(); ++i) {
      for (Index j = 0; j < sample_v.rows(); ++j) a(i, j) *= gaussian(eval_v(i, c) - sample_v(j, c), h_v(c));
    }
  }
  return a;
}

double lscv_score(const Matrix& sample, const Vector& h) {
  const Index m = sample.rows();
  const Vector y = sample.col(0);
  const Matrix v = sample.rightCols(sample.cols() - 1);
  Matrix a = conditioning_weights(v, v, h.tail(h.size() - 1));
  a.diagonal().setZero();
  Matrix conv(m, m);
  Matrix ky(m, m);
  for (Index j = 0; j < m; ++j) {
    for (Index k = 0; k < m; ++k) {
      conv(j, k) = gaussian(y(j) - y(k), std::sqrt(2.0) * h(0));
      ky(j, k) = gaussian(y(j) - y(k), h(0));
    }
  }
  double total = 0.0;
  Index used = 0;
  for (Index i = 0; i < m; ++i) {
    const Vector ai = a.row(i).transpose();
    const double mass = ai.sum();
    if (mass < kDensityFloor) continue;
    const double squared = ai.dot(conv * ai) / (mass * mass);
    const double at_obs = ai.dot(ky.col(i)) / mass;
    total += squared - 2.0 * at_obs;
    ++used;
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::infinity();
}

struct DensitySample {
  Matrix sample;  // outcome column first
  std::vector<Index> keep_cols;
  std::vector<std::string> dropped;
  std::vector<Index> rows;
};

DensitySample density_sample(const ObservationSet& data, const Vector& omega, const Matrix& z) {
  DensitySample ds;
  for (Index i = 0; i < data.size(); ++i) {
    if (omega(i) > 0.0) ds.rows.push_back(i);
  }
  if (ds.rows.size() < 2) throw InputError("conditional density: fewer than two weighted rows");
  const auto m = static_cast<Index>(ds.rows.size());
  Matrix full(m, 2 + z.cols());
  for (Index k = 0; k < m; ++k) {
    const Index i = ds.rows[static_cast<std::size_t>(k)];
    full(k, 0) = data.y(i);
    full(k, 1) = omega(i);
    full.row(k).tail(z.cols()) = z.row(i);
  }
  ds.keep_cols.push_back(0);
  for (Index c = 1; c < full.cols(); ++c) {
    if (sample_sd(full.col(c)) < kFlatColumn) {
      ds.dropped.push_back(c == 1 ? "omega" : "z" + std::to_string(c - 2));
    } else {
      ds.keep_cols.push_back(c);
    }
  }
  ds.sample.resize(m, static_cast<Index>(ds.keep_cols.size()));
  for (std::size_t c = 0; c < ds.keep_cols.size(); ++c) ds.sample.col(static_cast<Index>(c)) = full.col(ds.keep_cols[c]);
  return ds;
}

CovarianceEstimate assemble(const Matrix& z, const Vector& omega, const Vector& theta, ConditionalDensity density,
                            const Vector& psi, const Matrix* correction, double level) {
  const Index n = z.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  CovarianceEstimate est;
  est.level = level;
  InfluenceComponents& comp = est.components;
  comp.psi_res = psi;
  comp.M1_hat = inv_n * z.transpose() * (omega.cwiseProduct(density.density)).asDiagonal() * z;
  comp.M0 = (omega.cwiseProduct(psi)).asDiagonal() * z;
  if (correction) comp.M0 += *correction;

  const Eigen::SelfAdjointEigenSolver<Matrix> m1_eig(comp.M1_hat);
  const double top = m1_eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(m1_eig.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, top))) {
    throw NumericalError("density-weighted design singular");
  }
  const Matrix m1_inv = m1_eig.eigenvectors() * m1_eig.eigenvalues().cwiseInverse().asDiagonal() *
                        m1_eig.eigenvectors().transpose();
  const Matrix meat = inv_n * comp.M0.transpose() * comp.M0;
  Matrix sigma = m1_inv * meat * m1_inv;
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Matrix> s_eig(sigma);
  est.min_eigenvalue = s_eig.eigenvalues().minCoeff();
  if (est.min_eigenvalue < 0.0) {
    sigma = s_eig.eigenvectors() * s_eig.eigenvalues().cwiseMax(0.0).asDiagonal() * s_eig.eigenvectors().transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }
  est.sigma = sigma;
  est.se = (sigma.diagonal() * inv_n).cwiseMax(0.0).cwiseSqrt();
  est.ci = confidence_intervals(theta, sigma, n, level);
  est.density = std::move(density);
  return est;
}

Vector scores(const ObservationSet& data, const Vector& omega, const Matrix& z, const Vector& theta, double tau) {
  Vector psi = Vector::Zero(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    if (omega(i) > 0.0) psi(i) = quantile_score(data.y(i) - z.row(i).dot(theta), tau);
  }
  return psi;
}

}  // namespace

KernelDensityResult kernel_conditional_density(const Vector& sample_y, const Matrix& sample_v, const Vector& eval_y,
                                               const Matrix& eval_v, double h_y, const Vector& h_v, unsigned threads) {
  if (!(h_y > 0.0) || (h_v.size() && !(h_v.minCoeff() > 0.0))) {
    throw InputError("conditional density: bandwidths must be positive");
  }
  if (sample_v.cols() != h_v.size() || eval_v.cols() != h_v.size() || sample_v.rows() != sample_y.size() ||
      eval_v.rows() != eval_y.size()) {
    throw InputError("conditional density: dimension mismatch");
  }
  KernelDensityResult out{Vector(eval_y.size()), 0};
  std::vector<char> floored(static_cast<std::size_t>(eval_y.size()), 0);
  const auto evaluate = [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      double num = 0.0;
      double den = 0.0;
      for (Index j = 0; j < sample_y.size(); ++j) {
        double a = 1.0;
        for (Index c = 0; c < h_v.size(); ++c) a *= gaussian(eval_v(i, c) - sample_v(j, c), h_v(c));
        num += a * gaussian(eval_y(i) - sample_y(j), h_y);
        den += a;
      }
      if (den < kDensityFloor) {
        den = kDensityFloor;
        floored[static_cast<std::size_t>(i)] = 1;
      }
      out.density(i) = num / den;
    }
  };

  // rows are independent, so the split does not affect the result
  const Index m = eval_y.size();
  const auto workers = static_cast<Index>(std::clamp<unsigned>(threads, 1u, 64u));
  if (workers == 1 || m < 2 * workers) {
    evaluate(0, m);
  } else {
    std::vector<std::jthread> pool;
    const Index chunk = (m + workers - 1) / workers;
    for (Index t = 0; t < workers; ++t) {
      const Index begin = t * chunk;
      const Index end = std::min(m, begin + chunk);
      if (begin < end) pool.emplace_back(evaluate, begin, end);
    }
  }
  out.floored = std::count(floored.begin(), floored.end(), char{1});
  return out;
}

Vector default_bandwidths(const Matrix& sample) {
  const Index m = sample.rows();
  const Index q = sample.cols();
  if (m < 2) throw InputError("bandwidths: need at least two rows");
  const double rate = std::pow(static_cast<double>(m), -1.0 / (4.0 + static_cast<double>(q)));
  Vector h(q);
  for (Index c = 0; c < q; ++c) {
    const double sd = sample_sd(sample.col(c));
    if (!(sd > 0.0)) throw InputError("bandwidths: degenerate dimension " + std::to_string(c));
    h(c) = 1.06 * sd * rate;
  }
  return h;
}

Vector cross_validated_bandwidths(const Matrix& sample) {
  constexpr Index kMaxRows = 300;
  const Vector rot = default_bandwidths(sample);
  const Index stride = std::max<Index>(1, (sample.rows() + kMaxRows - 1) / kMaxRows);
  Matrix sub((sample.rows() + stride - 1) / stride, sample.cols());
  for (Index k = 0; k < sub.rows(); ++k) sub.row(k) = sample.row(k * stride);

  double best_score = std::numeric_limits<double>::infinity();
  double best_mult = 1.0;
  for (int step = 0; step <= 15; ++step) {
    const double mult = 0.5 + 0.1 * step;
    const double score = lscv_score(sub, mult * rot);
    if (score < best_score) {
      best_score = score;
      best_mult = mult;
    }
  }
  return best_mult * rot;
}

ConditionalDensity conditional_density(const ObservationSet& data, const Vector& omega, const Matrix& z,
                                       const Vector& theta, BandwidthMode mode, unsigned threads) {
  const DensitySample ds = density_sample(data, omega, z);
  const Vector h = mode == BandwidthMode::CrossValidated ? cross_validated_bandwidths(ds.sample)
                                                         : default_bandwidths(ds.sample);
  return conditional_density(data, omega, z, theta, h, threads);
}

ConditionalDensity conditional_density(const ObservationSet& data, const Vector& omega, const Matrix& z,
                                       const Vector& theta, const Vector& bandwidths, unsigned threads) {
  const DensitySample ds = density_sample(data, omega, z);
  if (bandwidths.size() != ds.sample.cols()) throw InputError("conditional density: bandwidth count mismatch");

  const auto m = static_cast<Index>(ds.rows.size());
  Vector eval_y(m);
  for (Index k = 0; k < m; ++k) eval_y(k) = z.row(ds.rows[static_cast<std::size_t>(k)]).dot(theta);
  const Matrix v = ds.sample.rightCols(ds.sample.cols() - 1);
  const KernelDensityResult kd =
      kernel_conditional_density(ds.sample.col(0), v, eval_y, v, bandwidths(0), bandwidths.tail(bandwidths.size() - 1),
                                 threads);

  ConditionalDensity out;
  out.density = Vector::Zero(data.size());
  for (Index k = 0; k < m; ++k) out.density(ds.rows[static_cast<std::size_t>(k)]) = kd.density(k);
  out.bandwidths = bandwidths;
  out.dropped = ds.dropped;
  out.floored = kd.floored;
  return out;
}

CovarianceEstimate covariance(const FirstStageFit& fit, const QuantileSolution& qsol, const ObservationSet& data,
                              double tau, const InferenceOptions& options) {
  const Matrix z = quantile_design(data);
  const Vector omega = weights(fit, data).omega;
  const Vector psi = scores(data, omega, z, qsol.theta, tau);
  ConditionalDensity density = conditional_density(data, omega, z, qsol.theta, options.bandwidth, options.threads);

  const DesignMatrices dm = build_designs(data, fit.plan);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  const Index k = fit.plan.K();
  const Matrix g_reg = fit.G_hat + fit.ridge * Matrix::Identity(k, k);
  const Eigen::LDLT<Matrix> g_ldlt(g_reg);

  InfluenceComponents parts;
  parts.T_hat = inv_n * dm.phi.transpose() * psi.asDiagonal() * z;
  parts.projector = g_ldlt.solve(fit.H_hat.transpose()).transpose();
  parts.HGinvH = parts.projector * fit.H_hat.transpose();
  parts.Ujhat = Vector::Ones(data.size()) - dm.phi * fit.beta_u;

  Matrix correction;
  if (options.first_stage_correction) {
    const Matrix lifted = parts.HGinvH.ldlt().solve(parts.T_hat);  // (H G^-1 H')^-1 T, J x d
    correction = parts.Ujhat.asDiagonal() * dm.b * parts.projector.transpose() * lifted;
  }
  CovarianceEstimate est = assemble(z, omega, qsol.theta, std::move(density), psi,
                                    options.first_stage_correction ? &correction : nullptr, options.level);
  parts.M1_hat = std::move(est.components.M1_hat);
  parts.M0 = std::move(est.components.M0);
  parts.psi_res = std::move(est.components.psi_res);
  est.components = std::move(parts);
  return est;
}

CovarianceEstimate weighted_sandwich(const ObservationSet& data, const Vector& omega, const QuantileSolution& qsol,
                                     double tau, const InferenceOptions& options) {
  const Matrix z = quantile_design(data);
  const Vector psi = scores(data, omega, z, qsol.theta, tau);
  ConditionalDensity density = conditional_density(data, omega, z, qsol.theta, options.bandwidth, options.threads);
  return assemble(z, omega, qsol.theta, std::move(density), psi, nullptr, options.level);
}

Matrix confidence_intervals(const Vector& theta, const Matrix& sigma, Index n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
  const double zq = boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
  Matrix ci(theta.size(), 2);
  for (Index k = 0; k < theta.size(); ++k) {
    const double half = zq * std::sqrt(std::max(0.0, sigma(k, k)) / static_cast<double>(n));
    ci(k, 0) = theta(k) - half;
    ci(k, 1) = theta(k) + half;
  }
  return ci;
}

}  // namespace selqr
