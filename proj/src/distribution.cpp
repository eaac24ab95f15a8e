#include "selqr/distribution.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "selqr/errors.hpp"

namespace selqr {

CorrectedCDF::CorrectedCDF(const Vector& outcomes, const Vector& mass) {
  if (outcomes.size() == 0) throw InputError("cdf: no selected rows");
  if (outcomes.size() != mass.size()) throw InputError("cdf: outcome and weight lengths differ");
  if ((mass.array() < 0.0).any() || !(mass.sum() > 0.0)) throw InputError("cdf: weights must be nonnegative with positive total");

  std::vector<Index> order(static_cast<std::size_t>(outcomes.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return outcomes(a) < outcomes(b); });

  const double total = mass.sum();
  support_.resize(outcomes.size());
  weights_.resize(outcomes.size());
  cumulative_.resize(outcomes.size());
  double running = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto row = static_cast<Index>(k);
    support_(row) = outcomes(order[k]);
    weights_(row) = mass(order[k]) / total;
    running += weights_(row);
    cumulative_(row) = running;
  }
  // exact 1 at the top; ties share the cumulative value of their last copy
  cumulative_(cumulative_.size() - 1) = 1.0;
  for (Index k = cumulative_.size() - 2; k >= 0; --k) {
    if (support_(k) == support_(k + 1)) cumulative_(k) = cumulative_(k + 1);
  }
}

double CorrectedCDF::operator()(double y) const {
  const auto* begin = support_.data();
  const auto* end = begin + support_.size();
  const auto it = std::upper_bound(begin, end, y);
  if (it == begin) return 0.0;
  return cumulative_(static_cast<Index>(it - begin) - 1);
}

double CorrectedCDF::quantile(double tau) const {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("cdf quantile: tau must lie in (0, 1)");
  const auto* begin = cumulative_.data();
  const auto* end = begin + cumulative_.size();
  const auto it = std::lower_bound(begin, end, tau);
  return it == end ? support_(support_.size() - 1) : support_(static_cast<Index>(it - begin));
}

CorrectedCDF corrected_cdf(const FirstStageFit& fit, const ObservationSet& data) {
  const std::vector<Index> sel = selected_rows(data);
  if (sel.empty()) throw InputError("cdf: no selected rows");
  Vector y(static_cast<Index>(sel.size()));
  Vector g(static_cast<Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k) {
    const auto row = static_cast<Index>(k);
    y(row) = data.y(sel[k]);
    g(row) = fit.projected() ? fit.g_constrained(y(row), data.x.row(sel[k]))
                             : fit.g_unconstrained(y(row), data.x.row(sel[k]));
  }
  return CorrectedCDF(y, g);
}

CorrectedCDF empirical_cdf(const ObservationSet& data) {
  const std::vector<Index> sel = selected_rows(data);
  if (sel.empty()) throw InputError("cdf: no selected rows");
  Vector y(static_cast<Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k) y(static_cast<Index>(k)) = data.y(sel[k]);
  return CorrectedCDF(y, Vector::Ones(y.size()));
}

double quantile_from_cdf(const CorrectedCDF& cdf, double tau) { return cdf.quantile(tau); }

}  // namespace selqr
