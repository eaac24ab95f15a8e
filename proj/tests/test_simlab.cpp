#include <numbers>
#include <random>

#include "doctest.h"
#include "selqr/errors.hpp"
#include "selqr/simlab.hpp"
#include "support.hpp"

using namespace selqr;

namespace {

double t3_cdf(double t) {
  const double s = t / std::sqrt(3.0);
  return 0.5 + (s / (1.0 + s * s) + std::atan(s)) / std::numbers::pi;
}

double mixture_cdf(double e) { return 0.4 * testing::normal_cdf(e / 1.5) + 0.6 * testing::normal_cdf(e); }

SimEstimator stub(std::string name, std::function<bool(const GeneratedDataset&)> fails = {}) {
  return SimEstimator{std::move(name), [fails](const GeneratedDataset& g, const SimulationSpec&) {
                        ReplicationEstimate r;
                        if (fails && fails(g)) {
                          r.error = "stub failure";
                          return r;
                        }
                        r.ok = true;
                        r.theta = g.beta_true;
                        r.ci.resize(3, 2);
                        r.ci.col(0) = g.beta_true.array() - 0.1;
                        r.ci.col(1) = g.beta_true.array() + 0.1;
                        return r;
                      }};
}

SimulationSpec small_spec() {
  SimulationSpec spec;
  spec.n = 300;
  spec.reps = 12;
  return spec;
}

}  // namespace

TEST_CASE("parse and print settings") {
  CHECK(parse_setting("B") == ErrorSetting::B);
  CHECK(parse_mechanism("M3") == Mechanism::M3);
  CHECK(to_string(ErrorSetting::E) == "E");
  CHECK(to_string(Mechanism::M1) == "M1");
  CHECK_THROWS_AS(parse_setting("F"), InputError);
  CHECK_THROWS_AS(parse_mechanism("M4"), InputError);
}

TEST_CASE("error_quantile: medians and closed forms") {
  for (auto s : {ErrorSetting::A, ErrorSetting::B, ErrorSetting::C, ErrorSetting::D}) {
    CHECK(std::abs(error_quantile(s, 0.5)) < 1e-10);
  }
  CHECK(error_quantile(ErrorSetting::E, 0.5, 2.0) == doctest::Approx(0.0));
  for (double tau : {0.1, 0.25, 0.75, 0.9}) {
    CHECK(testing::normal_cdf(error_quantile(ErrorSetting::A, tau)) == doctest::Approx(tau).epsilon(1e-12));
    CHECK(std::abs(mixture_cdf(error_quantile(ErrorSetting::B, tau)) - tau) < 1e-10);
    CHECK(t3_cdf(error_quantile(ErrorSetting::C, tau) / 0.7) == doctest::Approx(tau).epsilon(1e-12));
    CHECK(error_quantile(ErrorSetting::D, tau) == doctest::Approx(-1.5 + 3.0 * tau));
    CHECK(error_quantile(ErrorSetting::E, tau, -1.5) ==
          doctest::Approx(1.25 * error_quantile(ErrorSetting::A, tau)).epsilon(1e-12));
  }
}

TEST_CASE("generate: recentred errors have the tau-quantile at zero") {
  SimulationSpec spec;
  spec.n = 50000;
  for (auto s : {ErrorSetting::A, ErrorSetting::B, ErrorSetting::C, ErrorSetting::D, ErrorSetting::E}) {
    for (double tau : {0.25, 0.5}) {
      spec.setting = s;
      spec.tau = tau;
      const GeneratedDataset g = generate(spec, 1);
      const Matrix z = quantile_design(g.data);
      const Vector u = g.latent_y - z * g.beta_true;
      CHECK(std::abs((u.array() <= 0.0).cast<double>().mean() - tau) < 0.01);
    }
  }
}

TEST_CASE("generate: covariates, truth and selection") {
  SimulationSpec spec;
  spec.n = 10000;
  const GeneratedDataset g = generate(spec, 0);
  CHECK(std::abs(g.data.d.mean() - 0.65) < 0.03);
  CHECK(g.beta_true == (Vector(3) << 1.0, 2.0, 1.0).finished());
  CHECK(std::abs(g.data.w.col(0).mean() - 2.0) < 0.05);
  CHECK(std::abs(g.data.x.col(0).mean() - 1.0) < 0.05);
  const double cov = ((g.data.w.col(0).array() - 2.0) * (g.data.x.col(0).array() - 1.0)).mean();
  CHECK(std::abs(cov - 0.5) < 0.05);
  for (Index i = 0; i < spec.n; ++i) {
    CHECK(g.p(i) > 0.0);
    CHECK(g.p(i) < 1.0);
    if (g.data.selected(i)) {
      CHECK(g.data.y(i) == g.latent_y(i));
    } else {
      CHECK(std::isnan(g.data.y(i)));
    }
  }
}

TEST_CASE("generate: determinism") {
  SimulationSpec spec;
  const GeneratedDataset a = generate(spec, 17);
  const GeneratedDataset b = generate(spec, 17);
  const GeneratedDataset c = generate(spec, 18);
  CHECK(a.latent_y == b.latent_y);
  CHECK(a.data.d == b.data.d);
  CHECK(a.data.w == b.data.w);
  CHECK(a.latent_y != c.latent_y);
}

TEST_CASE("run: injected stub gives zero bias and full coverage") {
  const SimulationSpec spec = small_spec();
  const MetricsTable t = run(spec, {stub("oracle")});
  CHECK(t.ok());
  const EstimatorMetrics& m = t.at("oracle");
  CHECK(m.used == spec.reps);
  for (const auto& c : m.coefficients) {
    CHECK(c.mean_bias == 0.0);
    CHECK(c.rmse == 0.0);
    CHECK(c.coverage == 1.0);
    CHECK(c.ci_length == doctest::Approx(0.2));
  }
  CHECK_THROWS(t.at("missing"));
}

TEST_CASE("run: exclusions are counted and fail the run above 2%") {
  SimulationSpec spec = small_spec();
  spec.reps = 50;
  const double first3 = generate(spec, 3).latent_y(0);
  const double first7 = generate(spec, 7).latent_y(0);
  const auto at3 = [=](const GeneratedDataset& g) { return g.latent_y(0) == first3; };
  const auto at3or7 = [=](const GeneratedDataset& g) { return g.latent_y(0) == first3 || g.latent_y(0) == first7; };
  const MetricsTable t = run(spec, {stub("edge", at3), stub("flaky", at3or7)});
  CHECK(t.at("edge").excluded == 1);
  CHECK(t.at("edge").used == 49);
  CHECK_FALSE(t.at("edge").failed);
  CHECK(t.at("flaky").excluded == 2);
  CHECK(t.at("flaky").failed);
  CHECK_FALSE(t.ok());
}

TEST_CASE("aggregate: RMSE squared is bias squared plus variance") {
  SimulationSpec spec = small_spec();
  spec.estimators = {Estimator::Uncorrected, Estimator::SemiparametricIv};
  const MetricsTable t = run(spec);
  for (std::size_t e = 0; e < t.estimators.size(); ++e) {
    for (Index k = 0; k < 3; ++k) {
      std::vector<double> v;
      for (const auto& r : t.replications) {
        if (r.estimates[e].ok) v.push_back(r.estimates[e].theta(k));
      }
      const Eigen::Map<Vector> th(v.data(), static_cast<Index>(v.size()));
      const double truth = (Vector(3) << 1.0, 2.0, 1.0).finished()(k);
      const double var = (th.array() - th.mean()).square().mean();
      const CoefficientMetrics& c = t.estimators[e].coefficients[static_cast<std::size_t>(k)];
      CHECK(std::abs(c.rmse * c.rmse - (c.mean_bias * c.mean_bias + var)) < 1e-10);
      CHECK(c.mean_bias == doctest::Approx(th.mean() - truth).epsilon(1e-12));
    }
  }
}

TEST_CASE("aggregate: invariant to record order") {
  SimulationSpec spec = small_spec();
  spec.estimators = {Estimator::Uncorrected, Estimator::Mar};
  const MetricsTable t = run(spec);
  std::vector<ReplicationRecord> shuffled = t.replications;
  std::mt19937_64 rng(5);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Vector truth = (Vector(3) << 1.0, 2.0, 1.0).finished();
  const auto a = aggregate(t.replications, {"uncorrected", "mar"}, truth, coefficient_names(1, 1));
  const auto b = aggregate(shuffled, {"uncorrected", "mar"}, truth, coefficient_names(1, 1));
  for (std::size_t e = 0; e < a.size(); ++e) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(a[e].coefficients[k].mean_bias == b[e].coefficients[k].mean_bias);
      CHECK(a[e].coefficients[k].rmse == b[e].coefficients[k].rmse);
      CHECK(a[e].coefficients[k].coverage == b[e].coefficients[k].coverage);
      CHECK(a[e].coefficients[k].ci_length == b[e].coefficients[k].ci_length);
    }
  }
}

TEST_CASE("run: results do not depend on the thread count") {
  SimulationSpec spec = small_spec();
  spec.threads = 1;
  const MetricsTable one = run(spec);
  spec.threads = 3;
  const MetricsTable three = run(spec);
  REQUIRE(one.estimators.size() == three.estimators.size());
  CHECK(one.mean_missing_rate == three.mean_missing_rate);
  for (std::size_t e = 0; e < one.estimators.size(); ++e) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& a = one.estimators[e].coefficients[k];
      const auto& b = three.estimators[e].coefficients[k];
      CHECK(a.mean_bias == b.mean_bias);
      CHECK(a.rmse == b.rmse);
      CHECK(a.ci_length == b.ci_length);
      CHECK(a.coverage == b.coverage);
    }
  }
  for (std::size_t r = 0; r < one.replications.size(); ++r) {
    for (std::size_t e = 0; e < one.estimators.size(); ++e) {
      CHECK(one.replications[r].estimates[e].theta == three.replications[r].estimates[e].theta);
    }
  }
}

TEST_CASE("run: a single replication has 0/1 coverage") {
  SimulationSpec spec = small_spec();
  spec.reps = 1;
  const MetricsTable t = run(spec);
  for (const auto& e : t.estimators) {
    for (const auto& c : e.coefficients) CHECK((c.coverage == 0.0 || c.coverage == 1.0));
  }
}

TEST_CASE("pairwise_sum") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i % 7);
  double naive = 0.0;
  for (double x : v) naive += x;
  CHECK(pairwise_sum(v) == doctest::Approx(naive).epsilon(1e-13));
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("SimulationSpec: validation") {
  SimulationSpec spec;
  spec.reps = 0;
  CHECK_THROWS_AS(spec.validate(), InputError);
  spec.reps = 1;
  spec.tau = 1.0;
  CHECK_THROWS_AS(spec.validate(), InputError);
}
