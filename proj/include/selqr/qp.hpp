#pragma once

#include <vector>

#include "selqr/types.hpp"

namespace selqr {

/// minimize 1/2 (x - target)' Q (x - target)  subject to  A x >= lower,
/// with Q symmetric positive definite.
struct ProjectionQp {
  Matrix hessian;
  Vector target;
  Matrix constraints;
  Vector lower;

  double objective(const Vector& x) const {
    const Vector diff = x - target;
    return 0.5 * diff.dot(hessian * diff);
  }
};

struct QpSolution {
  Vector x;
  Vector multipliers;         ///< one per constraint row, zero off the active set
  std::vector<Index> active;  ///< final working set
  int iterations = 0;
};

/// Dual active-set method (Goldfarb-Idnani): starts at the unconstrained
/// minimizer `target` and repeatedly adds the most violated constraint,
/// taking partial steps that drop active constraints whose multipliers would
/// turn negative. Linearly dependent and duplicated constraint rows are
/// handled by the drop step, so heavily degenerate vertices are fine.
/// A constraint counts as violated below lower - 1e-12 (1 + |lower|).
/// Throws NumericalError on infeasibility or when `max_iterations` add/drop
/// steps are exceeded.
QpSolution solve_active_set(const ProjectionQp& qp, int max_iterations);

struct KktReport {
  double stationarity = 0.0;     ///< ||Q(x - target) - A' lambda||_inf
  double min_slack = 0.0;        ///< min_i (A x - lower)_i
  double min_multiplier = 0.0;
  double complementarity = 0.0;  ///< max_i |lambda_i (A x - lower)_i|
  bool ok = false;
};

KktReport check_kkt(const ProjectionQp& qp, const QpSolution& sol, double stationarity_tol = 1e-6,
                    double feasibility_tol = 1e-8);

}  // namespace selqr
