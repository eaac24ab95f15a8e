#pragma once

#include "selqr/basis.hpp"
#include "selqr/data.hpp"
#include "selqr/qp.hpp"

namespace selqr {

struct ProjectionDiagnostics {
  bool already_feasible = false;
  int iterations = 0;
  Index constraint_count = 0;
  Index active_constraints = 0;
  double objective = 0.0;
  KktReport kkt;
};

/// Series 2SLS estimate of the inverse selection probability g(y, x) = phi^J(y, x)' beta.
struct FirstStageFit {
  BasisPlan plan;
  Vector beta_u;             ///< unconstrained 2SLS coefficients
  Vector beta_c;             ///< cone-projected coefficients, empty until cone_project
  Matrix H_hat;              ///< E_n[D phi b'], J x K
  Matrix G_hat;              ///< E_n[b b'], K x K
  double ridge = 0.0;        ///< jitter added to G_hat's diagonal before inversion, 0 if none
  Matrix constraint_points;  ///< rows (y, x) where g >= 1 was enforced
  ProjectionDiagnostics projection;

  bool projected() const { return beta_c.size() > 0; }
  double g_unconstrained(double y, const Eigen::Ref<const RowVector>& x) const {
    return plan.outcome_row(y, x).dot(beta_u);
  }
  double g_constrained(double y, const Eigen::Ref<const RowVector>& x) const {
    return plan.outcome_row(y, x).dot(beta_c);
  }
};

/// Observation weights Omega_i = D_i g(Y_i, X_i).
struct WeightVector {
  Vector omega;
};

/// beta_u = (H G^-1 H')^-1 H G^-1 E_n[b]. Throws NumericalError
/// "first-stage rank condition failed" when H_hat is rank deficient.
FirstStageFit estimate_unconstrained(const ObservationSet& data, const BasisPlan& plan);

/// Default constraint set: every selected (Y_i, X_i) plus a 50-point grid
/// over the outcome spline range crossed with at most 500 evenly strided X rows.
Matrix default_constraint_points(const ObservationSet& data, const BasisPlan& plan);

/// Least-squares projection of g_u onto {h in span(phi^J) : h >= 1 on the
/// constraint set}, with distance n^-1 sum_i (g_u - h)^2(Y_i, X_i) over all
/// rows. Unselected rows enter at Y_i = 0, the observed outcome D Y*.
FirstStageFit cone_project(FirstStageFit fit, const ObservationSet& data);
FirstStageFit cone_project(FirstStageFit fit, const ObservationSet& data, const Matrix& constraint_points);

/// Both steps: estimate_unconstrained followed by cone_project.
FirstStageFit fit_first_stage(const ObservationSet& data, const BasisPlan& plan);

/// omega_i = D_i max(g_c(Y_i, X_i), 1).
WeightVector weights(const FirstStageFit& fit, const ObservationSet& data);

/// n^-1 sum_i b^K_i (1 - D_i g_u(Y_i, X_i)), length K.
Vector moment_residual(const FirstStageFit& fit, const ObservationSet& data);

/// Active-set iteration cap for a J-dimensional projection.
inline int projection_iteration_cap(Index j) { return static_cast<int>(100 * (j + 1)); }

}  // namespace selqr
