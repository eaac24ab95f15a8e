#include "selqr/qr_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/QR>

#include "selqr/errors.hpp"

namespace selqr {

namespace {

struct Reduced {
  Matrix z;
  Vector y;
  Vector w;
  std::vector<Index> origin;
};

Reduced drop_zero_weights(const QuantileProblem& p) {
  std::vector<Index> keep;
  for (Index i = 0; i < p.w.size(); ++i) {
    if (p.w(i) > 0.0) keep.push_back(i);
  }
  Reduced r{Matrix(static_cast<Index>(keep.size()), p.z.cols()), Vector(static_cast<Index>(keep.size())),
            Vector(static_cast<Index>(keep.size())), keep};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto row = static_cast<Index>(k);
    r.z.row(row) = p.z.row(keep[k]);
    r.y(row) = p.y(keep[k]);
    r.w(row) = p.w(keep[k]);
  }
  return r;
}

// d linearly independent rows, preferring small residuals of a weighted L2 fit.
std::vector<Index> initial_basis(const Reduced& r) {
  const Index n = r.z.rows();
  const Index d = r.z.cols();
  const Vector sw = r.w.cwiseSqrt();
  const Vector ls = (sw.asDiagonal() * r.z).colPivHouseholderQr().solve(sw.cwiseProduct(r.y));
  const Vector resid = (r.y - r.z * ls).cwiseAbs();

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return resid(a) < resid(b); });

  std::vector<Index> basis;
  Matrix rows(0, d);
  for (Index i : order) {
    Matrix trial(rows.rows() + 1, d);
    trial.topRows(rows.rows()) = rows;
    trial.row(rows.rows()) = r.z.row(i);
    Eigen::FullPivLU<Matrix> lu(trial);
    lu.setThreshold(1e-10);
    if (lu.rank() == trial.rows()) {
      rows = trial;
      basis.push_back(i);
      if (static_cast<Index>(basis.size()) == d) break;
    }
  }
  if (static_cast<Index>(basis.size()) < d) throw NumericalError("quantile regression: rank-deficient design");
  return basis;
}

}  // namespace

void QuantileProblem::validate() const {
  if (y.size() != z.rows() || w.size() != z.rows()) throw InputError("quantile problem: dimension mismatch");
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("quantile problem: tau must lie in (0, 1)");
  if ((w.array() < 0.0).any() || !w.allFinite()) throw InputError("quantile problem: weights must be finite and >= 0");
  for (Index i = 0; i < z.rows(); ++i) {
    if (w(i) > 0.0 && (!std::isfinite(y(i)) || !z.row(i).allFinite())) {
      throw InputError("quantile problem: non-finite data on a positive-weight row");
    }
  }
}

double weighted_check_loss(const QuantileProblem& problem, const Vector& theta) {
  double total = 0.0;
  for (Index i = 0; i < problem.z.rows(); ++i) {
    if (problem.w(i) == 0.0) continue;
    total += problem.w(i) * check_loss(problem.y(i) - problem.z.row(i).dot(theta), problem.tau);
  }
  return total;
}

QuantileSolution solve(const QuantileProblem& problem) {
  problem.validate();
  const Reduced r = drop_zero_weights(problem);
  const Index n = r.z.rows();
  const Index d = r.z.cols();
  const double tau = problem.tau;
  if (n < d) throw NumericalError("quantile regression: rank-deficient design");

  std::vector<Index> basis = initial_basis(r);
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Index b : basis) in_basis[static_cast<std::size_t>(b)] = 1;

  const double scale = r.w.sum() * (1.0 + r.z.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;
  const int max_iterations = static_cast<int>(50 * n + 1000);
  int degenerate_run = 0;

  QuantileSolution sol;
  for (sol.iterations = 0;; ++sol.iterations) {
    if (sol.iterations >= max_iterations) throw NumericalError("quantile regression: pivot limit reached");

    Matrix zh(d, d);
    Vector yh(d);
    for (Index k = 0; k < d; ++k) {
      zh.row(k) = r.z.row(basis[static_cast<std::size_t>(k)]);
      yh(k) = r.y(basis[static_cast<std::size_t>(k)]);
    }
    const Eigen::PartialPivLU<Matrix> lu(zh);
    sol.theta = lu.solve(yh);
    Vector resid = r.y - r.z * sol.theta;
    for (Index b : basis) resid(b) = 0.0;

    Vector g = Vector::Zero(d);
    for (Index i = 0; i < n; ++i) {
      if (!in_basis[static_cast<std::size_t>(i)]) g += r.w(i) * quantile_score(resid(i), tau) * r.z.row(i).transpose();
    }
    const Vector a = lu.transpose().solve(g);

    // directional derivative when basic row k leaves with residual sign -sigma
    Index leave = -1;
    double sigma = 0.0;
    double best = -tol;
    for (Index k = 0; k < d; ++k) {
      const double wk = r.w(basis[static_cast<std::size_t>(k)]);
      const double up = -a(k) + wk * (1.0 - tau);
      const double down = a(k) + wk * tau;
      const bool bland = degenerate_run > 2 * d;
      for (const auto& [deriv, s] : {std::pair{up, 1.0}, std::pair{down, -1.0}}) {
        if (deriv < best) {
          best = deriv;
          leave = k;
          sigma = s;
        }
      }
      if (bland && leave >= 0) break;
    }
    if (leave < 0) break;

    Vector unit = Vector::Zero(d);
    unit(leave) = sigma;
    const Vector delta = lu.solve(unit);
    const Vector u = r.z * delta;

    std::vector<std::pair<double, Index>> breaks;
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || u(i) == 0.0) continue;
      const double t = resid(i) / u(i);
      if (t > 0.0 || (resid(i) == 0.0 && u(i) > 0.0)) breaks.emplace_back(std::max(t, 0.0), i);
    }
    std::sort(breaks.begin(), breaks.end());

    double slope = best;
    Index enter = -1;
    double step = 0.0;
    for (const auto& [t, i] : breaks) {
      slope += r.w(i) * std::abs(u(i));
      if (slope >= 0.0) {
        enter = i;
        step = t;
        break;
      }
    }
    if (enter < 0) throw NumericalError("quantile regression: unbounded objective");

    degenerate_run = step == 0.0 ? degenerate_run + 1 : 0;
    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(leave)])] = 0;
    basis[static_cast<std::size_t>(leave)] = enter;
    in_basis[static_cast<std::size_t>(enter)] = 1;
  }

  sol.objective = weighted_check_loss(problem, sol.theta);
  for (Index b : basis) sol.active_set.push_back(r.origin[static_cast<std::size_t>(b)]);
  std::sort(sol.active_set.begin(), sol.active_set.end());
  return sol;
}

SubgradientCertificate subgradient_certificate(const QuantileProblem& problem, const Vector& theta, double tol) {
  const Index d = problem.z.cols();
  const double tau = problem.tau;
  Vector fixed = Vector::Zero(d);
  Vector lo = Vector::Zero(d);
  Vector hi = Vector::Zero(d);
  std::vector<Index> zeros;
  for (Index i = 0; i < problem.z.rows(); ++i) {
    const double w = problem.w(i);
    if (w == 0.0) continue;
    const double resid = problem.y(i) - problem.z.row(i).dot(theta);
    if (std::abs(resid) <= 1e-9 * (1.0 + std::abs(problem.y(i)))) {
      zeros.push_back(i);
      for (Index k = 0; k < d; ++k) {
        const double a = w * problem.z(i, k) * (tau - 1.0);
        const double b = w * problem.z(i, k) * tau;
        lo(k) += std::min(a, b);
        hi(k) += std::max(a, b);
      }
    } else {
      fixed += w * quantile_score(resid, tau) * problem.z.row(i).transpose();
    }
  }

  SubgradientCertificate cert;
  cert.zero_residuals = static_cast<Index>(zeros.size());
  const double scale = 1.0 + problem.w.sum() * (1.0 + problem.z.cwiseAbs().maxCoeff());
  for (Index k = 0; k < d; ++k) {
    const double target = -fixed(k);
    const double gap = std::max({0.0, lo(k) - target, target - hi(k)});
    cert.max_violation = std::max(cert.max_violation, gap / scale);
  }

  if (static_cast<Index>(zeros.size()) == d) {
    Matrix zw(d, d);
    for (Index k = 0; k < d; ++k) zw.col(k) = problem.w(zeros[k]) * problem.z.row(zeros[k]).transpose();
    const Eigen::FullPivLU<Matrix> lu(zw);
    if (lu.isInvertible()) {
      const Vector v = lu.solve(-fixed);
      for (Index k = 0; k < d; ++k) {
        const double gap = std::max({0.0, (tau - 1.0) - v(k), v(k) - tau});
        cert.max_violation = std::max(cert.max_violation, gap);
      }
    }
  }
  cert.ok = cert.max_violation <= tol;
  return cert;
}

}  // namespace selqr
