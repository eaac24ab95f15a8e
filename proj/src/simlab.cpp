#include "selqr/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "selqr/errors.hpp"

namespace selqr {

namespace {

struct SelectionParams {
  double alpha;
  double gamma;
  double xi;
};

SelectionParams selection_params(Mechanism m) {
  switch (m) {
    case Mechanism::M1:
      return {-0.1, 0.8, 0.0};
    case Mechanism::M2:
      return {-2.4, 0.6, 0.6};
    case Mechanism::M3:
      return {-2.6, 1.2, 0.6};
  }
  return {0.0, 0.0, 0.0};
}

double normal_quantile(double tau) { return boost::math::quantile(boost::math::normal(), tau); }

double mixture_quantile(double tau) {
  const boost::math::normal wide(0.0, 1.5);
  const boost::math::normal narrow(0.0, 1.0);
  const auto cdf = [&](double e) { return 0.4 * boost::math::cdf(wide, e) + 0.6 * boost::math::cdf(narrow, e); };
  double lo = -20.0;
  double hi = 20.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < tau ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::mt19937_64 replication_stream(std::uint64_t seed, std::uint64_t replication) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                    0x5e1ec7u};
  return std::mt19937_64(seq);
}

}  // namespace

ErrorSetting parse_setting(std::string_view s) {
  if (s == "A") return ErrorSetting::A;
  if (s == "B") return ErrorSetting::B;
  if (s == "C") return ErrorSetting::C;
  if (s == "D") return ErrorSetting::D;
  if (s == "E") return ErrorSetting::E;
  throw InputError("unknown setting '" + std::string(s) + "' (expected A-E)");
}

Mechanism parse_mechanism(std::string_view s) {
  if (s == "M1") return Mechanism::M1;
  if (s == "M2") return Mechanism::M2;
  if (s == "M3") return Mechanism::M3;
  throw InputError("unknown mechanism '" + std::string(s) + "' (expected M1-M3)");
}

std::string_view to_string(ErrorSetting s) {
  static constexpr std::string_view names[] = {"A", "B", "C", "D", "E"};
  return names[static_cast<int>(s)];
}

std::string_view to_string(Mechanism m) {
  static constexpr std::string_view names[] = {"M1", "M2", "M3"};
  return names[static_cast<int>(m)];
}

void SimulationSpec::validate() const {
  if (n < 10) throw InputError("simulation: n must be at least 10");
  if (reps < 1) throw InputError("simulation: reps must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("simulation: tau must lie in (0, 1)");
  if (estimators.empty()) throw InputError("simulation: no estimators requested");
}

double error_quantile(ErrorSetting setting, double tau, double x) {
  switch (setting) {
    case ErrorSetting::A:
      return normal_quantile(tau);
    case ErrorSetting::B:
      return mixture_quantile(tau);
    case ErrorSetting::C:
      return 0.7 * boost::math::quantile(boost::math::students_t(3.0), tau);
    case ErrorSetting::D:
      return -1.5 + 3.0 * tau;
    case ErrorSetting::E:
      return 0.5 * (1.0 + std::abs(x)) * normal_quantile(tau);
  }
  return 0.0;
}

GeneratedDataset generate(const SimulationSpec& spec, std::uint64_t replication) {
  const Index n = spec.n;
  std::mt19937_64 rng = replication_stream(spec.seed, replication);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::student_t_distribution<double> t3(3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const SelectionParams sel = selection_params(spec.mechanism);
  const double shift = spec.setting == ErrorSetting::E ? 0.0 : error_quantile(spec.setting, spec.tau);
  const double e_unit_quantile = normal_quantile(spec.tau);
  const double x_loading = std::sqrt(0.75);

  GeneratedDataset g;
  g.data.d.resize(n);
  g.data.y.resize(n);
  g.data.w.resize(n, 1);
  g.data.x.resize(n, 1);
  g.latent_y.resize(n);
  g.p.resize(n);
  g.beta_true = (Vector(3) << 1.0, 2.0, 1.0).finished();

  for (Index i = 0; i < n; ++i) {
    // (W, X) ~ N((2, 1), [[1, .5], [.5, 1]])
    const double z1 = std_normal(rng);
    const double z2 = std_normal(rng);
    const double w = 2.0 + z1;
    const double x = 1.0 + 0.5 * z1 + x_loading * z2;

    double eps = 0.0;
    switch (spec.setting) {
      case ErrorSetting::A:
        eps = std_normal(rng) - shift;
        break;
      case ErrorSetting::B: {
        const bool wide = unit(rng) < 0.4;
        eps = (wide ? 1.5 : 1.0) * std_normal(rng) - shift;
        break;
      }
      case ErrorSetting::C:
        eps = 0.7 * t3(rng) - shift;
        break;
      case ErrorSetting::D:
        eps = -1.5 + 3.0 * unit(rng) - shift;
        break;
      case ErrorSetting::E: {
        const double scale = 0.5 * (1.0 + std::abs(x));
        eps = scale * (std_normal(rng) - e_unit_quantile);
        break;
      }
    }
    const double y_star = 1.0 + w + 2.0 * x + eps;
    const double covariate = spec.mechanism == Mechanism::M3 ? std::pow(std::sin(x), 2) : x;
    const double index = sel.alpha + sel.gamma * covariate + sel.xi * y_star;
    const double p = 1.0 / (1.0 + std::exp(-index));
    const bool observed = unit(rng) < p;

    g.data.w(i, 0) = w;
    g.data.x(i, 0) = x;
    g.latent_y(i) = y_star;
    g.p(i) = p;
    g.data.d(i) = observed ? 1.0 : 0.0;
    g.data.y(i) = observed ? y_star : kAbsent;
  }
  return g;
}

std::vector<std::string> coefficient_names(Index n_x, Index n_w) {
  std::vector<std::string> names{"intercept"};
  for (Index k = 0; k < n_x; ++k) names.push_back(n_x == 1 ? "x" : "x" + std::to_string(k + 1));
  for (Index k = 0; k < n_w; ++k) names.push_back(n_w == 1 ? "w" : "w" + std::to_string(k + 1));
  return names;
}

SimEstimator builtin_estimator(Estimator e) {
  return SimEstimator{std::string(to_string(e)), [e](const GeneratedDataset& g, const SimulationSpec& spec) {
                        ReplicationEstimate r;
                        try {
                          const EstimateResult est = estimate(e, g.data, spec.tau, spec.options);
                          r.theta = est.solution.theta;
                          r.ci = est.covariance.ci;
                          if (est.first_stage) r.kkt_ok = est.first_stage->projection.kkt.ok;
                          r.ok = r.theta.allFinite() && r.ci.allFinite();
                          if (!r.ok) r.error = "non-finite estimate";
                        } catch (const std::exception& ex) {
                          r.ok = false;
                          r.error = ex.what();
                        }
                        return r;
                      }};
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::vector<EstimatorMetrics> aggregate(const std::vector<ReplicationRecord>& records,
                                        const std::vector<std::string>& estimator_names, const Vector& truth,
                                        const std::vector<std::string>& coefficient_labels) {
  std::vector<const ReplicationRecord*> ordered;
  for (const auto& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->index < b->index; });

  std::vector<EstimatorMetrics> out;
  for (std::size_t e = 0; e < estimator_names.size(); ++e) {
    EstimatorMetrics m;
    m.estimator = estimator_names[e];
    std::vector<const ReplicationEstimate*> good;
    for (const auto* r : ordered) {
      const ReplicationEstimate& est = r->estimates[e];
      if (!est.kkt_ok) ++m.kkt_failures;
      if (est.ok) {
        good.push_back(&est);
      } else {
        ++m.excluded;
      }
    }
    m.used = static_cast<int>(good.size());
    m.failed = m.used == 0 || static_cast<double>(m.excluded) > 0.02 * static_cast<double>(ordered.size());

    for (Index k = 0; k < truth.size(); ++k) {
      CoefficientMetrics c;
      c.coefficient = coefficient_labels[static_cast<std::size_t>(k)];
      c.truth = truth(k);
      std::vector<double> err, sq, len, hit;
      for (const auto* est : good) {
        const double diff = est->theta(k) - truth(k);
        err.push_back(diff);
        sq.push_back(diff * diff);
        len.push_back(est->ci(k, 1) - est->ci(k, 0));
        hit.push_back(est->ci(k, 0) <= truth(k) && truth(k) <= est->ci(k, 1) ? 1.0 : 0.0);
      }
      if (!good.empty()) {
        const double used = static_cast<double>(good.size());
        c.mean_bias = pairwise_sum(err) / used;
        c.rmse = std::sqrt(pairwise_sum(sq) / used);
        c.ci_length = pairwise_sum(len) / used;
        c.coverage = pairwise_sum(hit) / used;
      }
      m.coefficients.push_back(c);
    }
    out.push_back(std::move(m));
  }
  return out;
}

bool MetricsTable::ok() const {
  return std::none_of(estimators.begin(), estimators.end(), [](const auto& e) { return e.failed; });
}

const EstimatorMetrics& MetricsTable::at(std::string_view estimator) const {
  for (const auto& e : estimators) {
    if (e.estimator == estimator) return e;
  }
  throw InputError("metrics table: no estimator '" + std::string(estimator) + "'");
}

MetricsTable run(const SimulationSpec& spec) {
  std::vector<SimEstimator> estimators;
  for (Estimator e : spec.estimators) estimators.push_back(builtin_estimator(e));
  return run(spec, estimators);
}

MetricsTable run(const SimulationSpec& spec, const std::vector<SimEstimator>& estimators) {
  spec.validate();
  MetricsTable table;
  table.spec = spec;
  table.replications.resize(static_cast<std::size_t>(spec.reps));

  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int r = next++; r < spec.reps; r = next++) {
      const GeneratedDataset g = generate(spec, static_cast<std::uint64_t>(r));
      ReplicationRecord& rec = table.replications[static_cast<std::size_t>(r)];
      rec.index = static_cast<std::uint64_t>(r);
      rec.missing_rate = 1.0 - g.data.d.mean();
      for (const auto& est : estimators) rec.estimates.push_back(est.fit(g, spec));
    }
  };
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(spec.reps));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<double> missing;
  for (const auto& r : table.replications) missing.push_back(r.missing_rate);
  table.mean_missing_rate = pairwise_sum(missing) / static_cast<double>(missing.size());

  std::vector<std::string> names;
  for (const auto& e : estimators) names.push_back(e.name);
  const Vector truth = (Vector(3) << 1.0, 2.0, 1.0).finished();
  table.estimators = aggregate(table.replications, names, truth, coefficient_names(1, 1));
  return table;
}

}  // namespace selqr
