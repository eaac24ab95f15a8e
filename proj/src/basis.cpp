#include "selqr/basis.hpp"

#include <cmath>
#include <string>

#include "selqr/errors.hpp"

namespace selqr {

std::vector<double> KnotVector::full_knots() const {
  std::vector<double> t;
  t.reserve(interior.size() + 2 * (degree + 1));
  t.insert(t.end(), degree + 1, lo);
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), degree + 1, hi);
  return t;
}

void KnotVector::validate() const {
  if (degree < 1) throw InputError("knots: degree must be >= 1");
  if (!(lo < hi)) throw InputError("knots: zero-width support");
  double prev = lo;
  for (double k : interior) {
    if (!(k > prev) || !(k < hi)) throw InputError("knots: interior knots must be strictly increasing inside (lo, hi)");
    prev = k;
  }
}

KnotVector make_knots(std::span<const double> values, int n_interior, int degree) {
  if (values.empty()) throw InputError("knots: empty input");
  if (n_interior < 0) throw InputError("knots: negative interior knot count");
  if (degree < 1) throw InputError("knots: degree must be >= 1");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  KnotVector kv;
  kv.degree = degree;
  kv.lo = sorted.front();
  kv.hi = sorted.back();
  if (!(kv.lo < kv.hi)) throw InputError("knots: zero-width support");

  // linear-interpolation empirical quantile
  const auto quantile = [&](double level) {
    const double pos = level * static_cast<double>(sorted.size() - 1);
    const auto lower = static_cast<std::size_t>(std::floor(pos));
    const std::size_t upper = std::min(lower + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lower);
    return sorted[lower] + frac * (sorted[upper] - sorted[lower]);
  };
  for (int k = 1; k <= n_interior; ++k) {
    const double q = quantile(static_cast<double>(k) / (n_interior + 1));
    const double prev = kv.interior.empty() ? kv.lo : kv.interior.back();
    if (!(q > prev) || !(q < kv.hi)) {
      throw InputError("knots: tied quantiles collapse interior knots (requested " +
                       std::to_string(n_interior) + ")");
    }
    kv.interior.push_back(q);
  }
  return kv;
}

Index BasisPlan::J() const {
  return (intercept ? 1 : 0) + (outcome ? outcome->basis_count() : 0) + n_linear;
}

Index BasisPlan::K() const {
  Index k = (intercept ? 1 : 0) + n_linear;
  for (std::size_t b = 0; b < instruments.size(); ++b) {
    k += instruments[b].basis_count() - (b == 0 ? 0 : 1);
  }
  return k;
}

void BasisPlan::validate() const {
  if (outcome) outcome->validate();
  for (const auto& kv : instruments) kv.validate();
  if (intercept && (outcome || !instruments.empty())) {
    throw InputError("basis plan: explicit intercept is collinear with a spline block");
  }
  if (J() == 0) throw InputError("basis plan: empty outcome design");
  if (K() < J()) throw InputError("basis plan: K must be >= J");
}

Vector BasisPlan::outcome_row(double y, const Eigen::Ref<const RowVector>& x) const {
  if (x.size() != n_linear) throw InputError("basis plan: dimension mismatch in X");
  Vector row(J());
  Index col = 0;
  if (intercept) row(col++) = 1.0;
  if (outcome) {
    const Index nb = outcome->basis_count();
    eval_basis_into(*outcome, y, row.segment(col, nb));
    col += nb;
  }
  row.tail(n_linear) = x.transpose();
  return row;
}

Vector BasisPlan::instrument_row(const Eigen::Ref<const RowVector>& w,
                                 const Eigen::Ref<const RowVector>& x) const {
  if (x.size() != n_linear || w.size() < static_cast<Index>(instruments.size())) {
    throw InputError("basis plan: dimension mismatch in (W, X)");
  }
  Vector row(K());
  Index col = 0;
  if (intercept) row(col++) = 1.0;
  for (std::size_t b = 0; b < instruments.size(); ++b) {
    const Vector block = eval_basis(instruments[b], w(static_cast<Index>(b)));
    const Index skip = b == 0 ? 0 : 1;
    row.segment(col, block.size() - skip) = block.tail(block.size() - skip);
    col += block.size() - skip;
  }
  row.tail(n_linear) = x.transpose();
  return row;
}

BasisPlan make_plan(const ObservationSet& data, const BasisSettings& settings) {
  std::vector<double> observed;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.selected(i)) observed.push_back(data.y(i));
  }
  BasisPlan plan;
  plan.outcome = make_knots(observed, settings.y_interior_knots, settings.y_degree);
  for (Index c = 0; c < data.w.cols(); ++c) {
    std::vector<double> col(data.w.col(c).data(), data.w.col(c).data() + data.size());
    plan.instruments.push_back(make_knots(col, settings.w_interior_knots, settings.w_degree));
  }
  plan.n_linear = data.x.cols();
  plan.validate();
  return plan;
}

DesignMatrices build_designs(const ObservationSet& data, const BasisPlan& plan) {
  if (data.x.cols() != plan.n_linear || data.w.cols() < static_cast<Index>(plan.instruments.size())) {
    throw InputError("build_designs: dimension mismatch between data and basis plan");
  }
  const Index n = data.size();
  DesignMatrices dm{Matrix::Zero(n, plan.J()), Matrix(n, plan.K()), data.d};
  for (Index i = 0; i < n; ++i) {
    if (data.selected(i)) dm.phi.row(i) = plan.outcome_row(data.y(i), data.x.row(i)).transpose();
    dm.b.row(i) = plan.instrument_row(data.w.row(i), data.x.row(i)).transpose();
  }
  return dm;
}

}  // namespace selqr
