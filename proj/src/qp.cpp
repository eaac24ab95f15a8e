#include "selqr/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "selqr/errors.hpp"

namespace selqr {

QpSolution solve_active_set(const ProjectionQp& qp, int max_iterations) {
  const Matrix& c = qp.constraints;
  const Index n = qp.hessian.rows();
  const Eigen::LLT<Matrix> llt(qp.hessian);
  if (llt.info() != Eigen::Success) throw NumericalError("active-set QP: Hessian not positive definite");
  const Matrix q_inv = llt.solve(Matrix::Identity(n, n));
  constexpr double kInf = std::numeric_limits<double>::infinity();

  QpSolution sol;
  sol.x = qp.target;
  std::vector<Index>& active = sol.active;
  std::vector<double> u;  // multipliers of the active constraints

  const auto slack = [&](Index i) { return c.row(i).dot(sol.x) - qp.lower(i); };
  const auto violated_tol = [&](Index i) { return 1e-12 * (1.0 + std::abs(qp.lower(i))); };

  int steps = 0;
  while (true) {
    // most violated constraint
    Index add = -1;
    double worst = 0.0;
    for (Index i = 0; i < c.rows(); ++i) {
      const double s = slack(i);
      if (s < -violated_tol(i) && s < worst) {
        worst = s;
        add = i;
      }
    }
    if (add < 0) break;

    const Vector np = c.row(add).transpose();
    double u_add = 0.0;
    while (true) {
      if (++steps > max_iterations) throw NumericalError("active-set QP: iteration cap reached");
      const auto q = static_cast<Index>(active.size());
      Matrix normals(n, q);
      for (Index k = 0; k < q; ++k) normals.col(k) = c.row(active[static_cast<std::size_t>(k)]).transpose();

      // primal direction z = H n_p and dual direction r for the active set
      Vector r = Vector::Zero(q);
      Vector z = q_inv * np;
      if (q > 0) {
        const Matrix qn = q_inv * normals;
        const Matrix m = normals.transpose() * qn;
        r = m.ldlt().solve(qn.transpose() * np);
        z -= qn * r;
      }

      double dual_step = kInf;
      Index drop = -1;
      for (Index k = 0; k < q; ++k) {
        if (r(k) > 1e-14) {
          const double limit = u[static_cast<std::size_t>(k)] / r(k);
          if (limit < dual_step) {
            dual_step = limit;
            drop = k;
          }
        }
      }
      const double zn = z.dot(np);
      const bool dependent = z.lpNorm<Eigen::Infinity>() <= 1e-12 * (q_inv * np).lpNorm<Eigen::Infinity>() || zn <= 0.0;
      const double primal_step = dependent ? kInf : -slack(add) / zn;
      const double step = std::min(dual_step, primal_step);
      if (step == kInf) throw NumericalError("active-set QP: constraints infeasible");

      if (!dependent) sol.x += step * z;
      for (Index k = 0; k < q; ++k) u[static_cast<std::size_t>(k)] -= step * r(k);
      u_add += step;

      if (step == primal_step) {
        active.push_back(add);
        u.push_back(u_add);
        break;
      }
      active.erase(active.begin() + drop);
      u.erase(u.begin() + drop);
    }
    sol.iterations = steps;
  }

  sol.iterations = steps;
  sol.multipliers = Vector::Zero(c.rows());
  for (std::size_t k = 0; k < active.size(); ++k) sol.multipliers(active[k]) = std::max(0.0, u[k]);
  return sol;
}

KktReport check_kkt(const ProjectionQp& qp, const QpSolution& sol, double stationarity_tol,
                    double feasibility_tol) {
  KktReport r;
  const Vector slack = qp.constraints * sol.x - qp.lower;
  const Vector residual = qp.hessian * (sol.x - qp.target) - qp.constraints.transpose() * sol.multipliers;
  r.stationarity = residual.lpNorm<Eigen::Infinity>();
  r.min_slack = slack.size() ? slack.minCoeff() : 0.0;
  r.min_multiplier = sol.multipliers.size() ? sol.multipliers.minCoeff() : 0.0;
  r.complementarity = slack.size() ? sol.multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff() : 0.0;
  r.ok = r.stationarity <= stationarity_tol && r.min_slack >= -feasibility_tol &&
         r.min_multiplier >= -stationarity_tol && r.complementarity <= stationarity_tol;
  return r;
}

}  // namespace selqr
