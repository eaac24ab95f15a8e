#pragma once

// Independent reference implementations used as test oracles. None of these
// share code with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "selqr/data.hpp"
#include "selqr/types.hpp"

namespace selqr::testing {

/// Textbook Cox-de Boor recursion on the full knot sequence with 0/0 = 0.
inline double naive_bspline(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    const bool last = t[i + 1] == t.back() && x == t.back() && t[i] < t[i + 1];
    return (t[i] <= x && x < t[i + 1]) || last ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  if (t[i + p] > t[i]) left = (x - t[i]) / (t[i + p] - t[i]) * naive_bspline(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1]) right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * naive_bspline(t, i + 1, p - 1, x);
  return left + right;
}

inline double loss(const Matrix& z, const Vector& y, const Vector& w, double tau, const Vector& theta) {
  double s = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    if (w(i) == 0.0) continue;
    const double u = y(i) - z.row(i).dot(theta);
    s += w(i) * u * (tau - (u < 0.0 ? 1.0 : 0.0));
  }
  return s;
}

/// Minimum of the weighted check loss over every interpolating vertex.
inline double brute_force_qr(const Matrix& z, const Vector& y, const Vector& w, double tau) {
  const Index n = z.rows();
  const Index d = z.cols();
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  std::fill(pick.begin(), pick.begin() + d, true);
  do {
    Matrix zs(d, d);
    Vector ys(d);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
      if (pick[static_cast<std::size_t>(i)]) {
        zs.row(k) = z.row(i);
        ys(k) = y(i);
        ++k;
      }
    }
    Eigen::FullPivLU<Matrix> lu(zs);
    if (!lu.isInvertible()) continue;
    best = std::min(best, loss(z, y, w, tau, lu.solve(ys)));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

/// min 1/2 (x - t)' Q (x - t) s.t. A x >= b by enumerating every candidate
/// active set and keeping the feasible KKT point with the smallest objective.
inline Vector brute_force_projection(const Matrix& q, const Vector& t, const Matrix& a, const Vector& b) {
  const Index m = a.rows();
  const Index n = q.rows();
  Vector best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<Index> act;
    for (Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) act.push_back(i);
    }
    const auto k = static_cast<Index>(act.size());
    if (k > n) continue;
    Matrix kkt = Matrix::Zero(n + k, n + k);
    Vector rhs = Vector::Zero(n + k);
    kkt.topLeftCorner(n, n) = q;
    rhs.head(n) = q * t;
    for (Index j = 0; j < k; ++j) {
      kkt.block(0, n + j, n, 1) = -a.row(act[j]).transpose();
      kkt.block(n + j, 0, 1, n) = a.row(act[j]);
      rhs(n + j) = b(act[j]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs);
    const Vector x = sol.head(n);
    if (k > 0 && sol.tail(k).minCoeff() < -1e-12) continue;
    if ((a * x - b).minCoeff() < -1e-12) continue;
    const double obj = 0.5 * (x - t).dot(q * (x - t));
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Probit log-likelihood written out directly.
inline double probit_ll(const Vector& d, const Matrix& x, const Vector& gamma) {
  double s = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    const double p = normal_cdf(x.row(i).dot(gamma));
    s += d(i) == 1.0 ? std::log(p) : std::log1p(-p);
  }
  return s;
}

/// Random quantile problem with an intercept column.
struct RandomQr {
  Matrix z;
  Vector y;
  Vector w;
};

inline RandomQr random_qr(std::mt19937_64& rng, Index n, Index d, double w_lo = 1.0, double w_hi = 3.0) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> wd(w_lo, w_hi);
  RandomQr p{Matrix(n, d), Vector(n), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    p.z(i, 0) = 1.0;
    for (Index k = 1; k < d; ++k) p.z(i, k) = nd(rng);
    p.y(i) = p.z.row(i).sum() + nd(rng);
    p.w(i) = wd(rng);
  }
  return p;
}

/// Linear model with logistic selection on (x, y*); W shifts y* only.
inline ObservationSet selection_sample(std::mt19937_64& rng, Index n, double xi = 0.6, bool all_selected = false) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  ObservationSet s;
  s.d.resize(n);
  s.y.resize(n);
  s.w.resize(n, 1);
  s.x.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double w = 2.0 + nd(rng);
    const double x = 1.0 + 0.5 * (w - 2.0) + std::sqrt(0.75) * nd(rng);
    const double y = 1.0 + w + 2.0 * x + nd(rng);
    const double p = 1.0 / (1.0 + std::exp(-(-2.4 + 0.6 * x + xi * y)));
    const bool sel = all_selected || ud(rng) < p;
    s.w(i, 0) = w;
    s.x(i, 0) = x;
    s.d(i) = sel ? 1.0 : 0.0;
    s.y(i) = sel ? y : kAbsent;
  }
  return s;
}

// Selection with 1/p = 1.8 + 0.02 (y - 5)^2 - 0.25 (x - 1), floored at 1. Away
// from the floor, 1/p lies in the span of the default first-stage basis.
struct SieveSample {
  ObservationSet data;
  Vector inverse_p;
};

inline SieveSample sieve_selection_sample(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  SieveSample s;
  s.data.d.resize(n);
  s.data.y.resize(n);
  s.data.w.resize(n, 1);
  s.data.x.resize(n, 1);
  s.inverse_p.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double w = 2.0 + nd(rng);
    const double x = 1.0 + 0.5 * (w - 2.0) + std::sqrt(0.75) * nd(rng);
    const double y = 1.0 + w + 2.0 * x + nd(rng);
    const double inv = std::max(1.0, 1.8 + 0.02 * (y - 5.0) * (y - 5.0) - 0.25 * (x - 1.0));
    const bool sel = ud(rng) < 1.0 / inv;
    s.data.w(i, 0) = w;
    s.data.x(i, 0) = x;
    s.data.d(i) = sel ? 1.0 : 0.0;
    s.data.y(i) = sel ? y : kAbsent;
    s.inverse_p(i) = inv;
  }
  return s;
}

}  // namespace selqr::testing
