#include "selqr/first_stage.hpp"

#include <algorithm>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "selqr/errors.hpp"

namespace selqr {

namespace {

// G^-1 M via LDLT; falls back to ridge jitter 1e-10 trace(G) / K.
Matrix solve_gram(const Matrix& g, const Matrix& rhs, double& ridge) {
  ridge = 0.0;
  Eigen::LDLT<Matrix> ldlt(g);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
    return ldlt.solve(rhs);
  }
  ridge = 1e-10 * g.trace() / static_cast<double>(g.rows());
  ldlt.compute(g + ridge * Matrix::Identity(g.rows(), g.cols()));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericalError("first stage: instrument Gram matrix not positive definite");
  }
  return ldlt.solve(rhs);
}

Matrix constraint_design(const BasisPlan& plan, const Matrix& points) {
  Matrix c(points.rows(), plan.J());
  for (Index i = 0; i < points.rows(); ++i) {
    c.row(i) = plan.outcome_row(points(i, 0), points.row(i).tail(points.cols() - 1)).transpose();
  }
  return c;
}

}  // namespace

FirstStageFit estimate_unconstrained(const ObservationSet& data, const BasisPlan& plan) {
  plan.validate();
  const Index n = data.size();
  if (n <= plan.K()) throw InputError("first stage: need n > K observations");
  const DesignMatrices dm = build_designs(data, plan);

  FirstStageFit fit;
  fit.plan = plan;
  const double inv_n = 1.0 / static_cast<double>(n);
  fit.H_hat = inv_n * dm.phi.transpose() * dm.b;
  fit.G_hat = inv_n * dm.b.transpose() * dm.b;
  const Vector c = inv_n * dm.b.colwise().sum().transpose();

  Eigen::ColPivHouseholderQR<Matrix> rank_check(fit.H_hat);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < plan.J()) throw NumericalError("first-stage rank condition failed");

  Matrix rhs(plan.K(), plan.J() + 1);
  rhs.leftCols(plan.J()) = fit.H_hat.transpose();
  rhs.col(plan.J()) = c;
  const Matrix ginv_rhs = solve_gram(fit.G_hat, rhs, fit.ridge);
  const Matrix hgh = fit.H_hat * ginv_rhs.leftCols(plan.J());
  const Vector hgc = fit.H_hat * ginv_rhs.col(plan.J());

  Eigen::ColPivHouseholderQR<Matrix> qr(hgh);
  qr.setThreshold(1e-12);
  if (qr.rank() < plan.J()) throw NumericalError("first-stage rank condition failed");
  fit.beta_u = qr.solve(hgc);
  if (!fit.beta_u.allFinite()) throw NumericalError("first-stage rank condition failed");
  return fit;
}

Matrix default_constraint_points(const ObservationSet& data, const BasisPlan& plan) {
  constexpr Index kGridSize = 50;
  constexpr Index kMaxRows = 500;
  const Index n = data.size();
  const Index p = data.x.cols();
  const std::vector<Index> sel = selected_rows(data);

  std::vector<Index> x_rows;
  const Index stride = std::max<Index>(1, (n + kMaxRows - 1) / kMaxRows);
  for (Index i = 0; i < n && static_cast<Index>(x_rows.size()) < kMaxRows; i += stride) x_rows.push_back(i);

  Vector grid;
  if (plan.outcome) {
    grid = Vector::LinSpaced(kGridSize, plan.outcome->lo, plan.outcome->hi);
  } else {
    grid = Vector::Zero(1);
  }

  const Index sample_count = static_cast<Index>(sel.size());
  Matrix points(sample_count + grid.size() * static_cast<Index>(x_rows.size()), 1 + p);
  for (Index k = 0; k < sample_count; ++k) {
    points(k, 0) = data.y(sel[k]);
    points.row(k).tail(p) = data.x.row(sel[k]);
  }
  Index row = sample_count;
  for (Index g = 0; g < grid.size(); ++g) {
    for (Index r : x_rows) {
      points(row, 0) = grid(g);
      points.row(row).tail(p) = data.x.row(r);
      ++row;
    }
  }
  return points;
}

FirstStageFit cone_project(FirstStageFit fit, const ObservationSet& data) {
  const Matrix points = default_constraint_points(data, fit.plan);
  return cone_project(std::move(fit), data, points);
}

FirstStageFit cone_project(FirstStageFit fit, const ObservationSet& data, const Matrix& constraint_points) {
  if (fit.beta_u.size() != fit.plan.J()) throw InputError("cone_project: unconstrained fit missing");
  if (data.selected_count() == 0) throw InputError("cone_project: no selected observations");

  // L2(P_n) distance over the full sample, with the observed outcome Y = D Y* (0 when missing)
  ProjectionQp qp;
  const Index n = data.size();
  Matrix p(n, fit.plan.J());
  for (Index i = 0; i < n; ++i) {
    p.row(i) = fit.plan.outcome_row(data.selected(i) ? data.y(i) : 0.0, data.x.row(i)).transpose();
  }
  qp.hessian = p.transpose() * p / static_cast<double>(n);
  qp.target = fit.beta_u;
  qp.constraints = constraint_design(fit.plan, constraint_points);
  qp.lower = Vector::Ones(constraint_points.rows());

  fit.constraint_points = constraint_points;
  fit.projection = ProjectionDiagnostics{};
  fit.projection.constraint_count = constraint_points.rows();

  if ((qp.constraints * fit.beta_u).minCoeff() >= 1.0 - 1e-10) {
    fit.beta_c = fit.beta_u;
    fit.projection.already_feasible = true;
    QpSolution trivial{fit.beta_u, Vector::Zero(qp.lower.size()), {}, 0};
    fit.projection.kkt = check_kkt(qp, trivial);
    return fit;
  }

  // h = 1 must lie in the span; then the cone is nonempty on the sieve
  Eigen::ColPivHouseholderQR<Matrix> ls(qp.constraints);
  const Vector unit = ls.solve(qp.lower);
  if (!unit.allFinite() || (qp.constraints * unit - qp.lower).lpNorm<Eigen::Infinity>() > 1e-8) {
    throw NumericalError("cone_project: constant function not representable, projection may be infeasible");
  }

  const QpSolution sol = solve_active_set(qp, projection_iteration_cap(fit.plan.J()));
  fit.beta_c = sol.x;
  fit.projection.iterations = sol.iterations;
  fit.projection.active_constraints = static_cast<Index>(sol.active.size());
  fit.projection.objective = qp.objective(sol.x);
  fit.projection.kkt = check_kkt(qp, sol);
  return fit;
}

FirstStageFit fit_first_stage(const ObservationSet& data, const BasisPlan& plan) {
  return cone_project(estimate_unconstrained(data, plan), data);
}

WeightVector weights(const FirstStageFit& fit, const ObservationSet& data) {
  if (!fit.projected()) throw InputError("weights: cone-projected coefficients missing");
  WeightVector w{Vector::Zero(data.size())};
  for (Index i = 0; i < data.size(); ++i) {
    if (data.selected(i)) w.omega(i) = std::max(1.0, fit.g_constrained(data.y(i), data.x.row(i)));
  }
  return w;
}

Vector moment_residual(const FirstStageFit& fit, const ObservationSet& data) {
  const DesignMatrices dm = build_designs(data, fit.plan);
  const Vector resid = Vector::Ones(data.size()) - dm.phi * fit.beta_u;
  return dm.b.transpose() * resid / static_cast<double>(data.size());
}

}  // namespace selqr
