#include "selqr/data.hpp"

#include <string>
#include <vector>

#include "selqr/errors.hpp"

namespace selqr {

Index ObservationSet::selected_count() const {
  Index count = 0;
  for (Index i = 0; i < d.size(); ++i) count += selected(i) ? 1 : 0;
  return count;
}

void ObservationSet::validate() const {
  const Index n = d.size();
  if (y.size() != n || w.rows() != n || x.rows() != n) {
    throw InputError("observation set: column lengths differ");
  }
  if (w.cols() < 1) throw InputError("observation set: at least one instrument column required");
  for (Index i = 0; i < n; ++i) {
    if (d(i) != 0.0 && d(i) != 1.0) {
      throw InputError("observation set: non-binary selection indicator at row " + std::to_string(i));
    }
    if (d(i) == 1.0 && !std::isfinite(y(i))) {
      throw InputError("observation set: observed row missing outcome at row " + std::to_string(i));
    }
  }
  if (!w.allFinite() || !x.allFinite()) throw InputError("observation set: non-finite covariate");
}

Matrix quantile_design(const ObservationSet& data) {
  const Index n = data.size();
  Matrix z(n, 1 + data.x.cols() + data.w.cols());
  z.col(0).setOnes();
  z.middleCols(1, data.x.cols()) = data.x;
  z.rightCols(data.w.cols()) = data.w;
  return z;
}

std::vector<Index> selected_rows(const ObservationSet& data) {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(data.selected_count()));
  for (Index i = 0; i < data.size(); ++i) {
    if (data.selected(i)) rows.push_back(i);
  }
  return rows;
}

}  // namespace selqr
