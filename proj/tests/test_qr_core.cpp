#include <random>

#include "doctest.h"
#include "selqr/errors.hpp"
#include "selqr/qr_core.hpp"
#include "support.hpp"

using namespace selqr;

namespace {

QuantileProblem intercept_only(std::vector<double> y, std::vector<double> w, double tau) {
  const auto n = static_cast<Index>(y.size());
  QuantileProblem p{Matrix::Ones(n, 1), Eigen::Map<Vector>(y.data(), n), Eigen::Map<Vector>(w.data(), n), tau};
  return p;
}

}  // namespace

TEST_CASE("check_loss and quantile_score") {
  CHECK(check_loss(1.0, 0.5) == 0.5);
  CHECK(check_loss(-1.0, 0.25) == 0.75);
  CHECK(check_loss(0.0, 0.9) == 0.0);
  CHECK(quantile_score(2.0, 0.5) == 0.5);
  CHECK(quantile_score(-2.0, 0.5) == -0.5);
  CHECK(quantile_score(0.0, 0.3) == 0.3);
}

TEST_CASE("solve: medians") {
  CHECK(solve(intercept_only({1, 2, 3}, {1, 1, 1}, 0.5)).theta(0) == 2.0);
  CHECK(solve(intercept_only({1, 2, 4}, {1, 1, 3}, 0.5)).theta(0) == 4.0);
  CHECK(solve(intercept_only({5, 1, 4, 2, 3}, {1, 1, 1, 1, 1}, 0.2)).theta(0) == 1.0);
}

TEST_CASE("solve: zero-weight rows never touch the solver") {
  QuantileProblem p = intercept_only({1, 2, 3, 0}, {1, 1, 1, 0}, 0.5);
  p.y(3) = std::numeric_limits<double>::quiet_NaN();
  const QuantileSolution s = solve(p);
  CHECK(s.theta(0) == 2.0);
  CHECK(s.objective == doctest::Approx(1.0));
  for (Index i : s.active_set) CHECK(i != 3);
}

TEST_CASE("solve: errors") {
  QuantileProblem p{Matrix::Ones(4, 2), Vector::LinSpaced(4, 0, 3), Vector::Ones(4), 0.5};
  CHECK_THROWS_AS(solve(p), NumericalError);  // duplicated column
  p.z = Matrix::Ones(4, 1);
  p.tau = 1.0;
  CHECK_THROWS_AS(solve(p), InputError);
  p.tau = 0.5;
  p.w(0) = -1.0;
  CHECK_THROWS_AS(solve(p), InputError);
}

TEST_CASE("solve: brute-force vertex oracle and subgradient certificate") {
  std::mt19937_64 rng(42);
  const double taus[] = {0.1, 0.25, 0.5, 0.9};
  for (int rep = 0; rep < 200; ++rep) {
    const Index n = 4 + rep % 12;
    const Index d = 1 + rep % 3;
    const testing::RandomQr r = testing::random_qr(rng, n, d);
    const QuantileProblem p{r.z, r.y, r.w, taus[rep % 4]};
    const QuantileSolution s = solve(p);
    CHECK(s.objective == doctest::Approx(testing::brute_force_qr(r.z, r.y, r.w, p.tau)).epsilon(1e-9));
    CHECK(std::abs(s.objective - testing::loss(r.z, r.y, r.w, p.tau, s.theta)) < 1e-9);
    CHECK(static_cast<Index>(s.active_set.size()) == d);
    for (Index i : s.active_set) CHECK(std::abs(r.y(i) - r.z.row(i).dot(s.theta)) < 1e-9);
    CHECK(subgradient_certificate(p, s.theta).ok);
  }
}

TEST_CASE("subgradient certificate rejects non-minimizers") {
  std::mt19937_64 rng(43);
  const testing::RandomQr r = testing::random_qr(rng, 40, 3);
  const QuantileProblem p{r.z, r.y, r.w, 0.3};
  const QuantileSolution s = solve(p);
  Vector off = s.theta;
  off(1) += 0.5;
  CHECK_FALSE(subgradient_certificate(p, off).ok);
}

TEST_CASE("solve: weight scaling and equivariance") {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 30; ++rep) {
    const testing::RandomQr r = testing::random_qr(rng, 60, 3);
    const QuantileProblem p{r.z, r.y, r.w, 0.25 + 0.02 * rep};
    const Vector theta = solve(p).theta;

    QuantileProblem scaled = p;
    scaled.w *= 3.7;
    CHECK((solve(scaled).theta - theta).lpNorm<Eigen::Infinity>() < 1e-9);

    Vector gamma(3);
    for (Index j = 0; j < 3; ++j) gamma(j) = nd(rng);
    QuantileProblem shifted = p;
    shifted.y += r.z * gamma;
    CHECK((solve(shifted).theta - theta - gamma).lpNorm<Eigen::Infinity>() < 1e-9);

    QuantileProblem stretched = p;
    stretched.y *= 2.5;
    CHECK((solve(stretched).theta - 2.5 * theta).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("solve: large weighted problem passes the certificate") {
  std::mt19937_64 rng(45);
  const testing::RandomQr r = testing::random_qr(rng, 2000, 4, 0.0, 5.0);
  for (double tau : {0.1, 0.5, 0.75}) {
    const QuantileProblem p{r.z, r.y, r.w, tau};
    const QuantileSolution s = solve(p);
    const SubgradientCertificate cert = subgradient_certificate(p, s.theta);
    CHECK(cert.ok);
    CHECK(cert.zero_residuals >= 4);
  }
}

TEST_CASE("solve: deterministic across runs") {
  std::mt19937_64 rng(46);
  const testing::RandomQr r = testing::random_qr(rng, 500, 3);
  const QuantileProblem p{r.z, r.y, r.w, 0.5};
  const QuantileSolution a = solve(p);
  const QuantileSolution b = solve(p);
  CHECK(a.theta == b.theta);
  CHECK(a.active_set == b.active_set);
}
