#include "fixtures.hpp"

#include <naipw/dgp.hpp>
#include <naipw/firststage.hpp>
#include <naipw/variance.hpp>

#include <Eigen/Eigenvalues>
#include <doctest.h>

using namespace naipw;
using namespace naipw::test;

TEST_CASE("D4 variances are exactly one") {
  Dataset d = d4_data();
  NuisanceEstimates n = d4_nuisances();
  CHECK(std::abs(var_aipw(d, n, 1.0) - 1.0) <= 1e-12);
  CHECK(std::abs(var_naipw(d, n, 1.0) - 1.0) <= 1e-12);
}

TEST_CASE("zero residuals with a constant contrast give zero variance") {
  Dataset d = d4_data();
  NuisanceEstimates n{d.Y, d.Y, constant(4, 0.3), {}, {}};
  n.q1.array() += 2.0;
  for (Index i = 0; i < 4; ++i) {
    if (d.A[i] > 0.5) n.q1[i] = d.Y[i], n.q0[i] = d.Y[i] - 2.0;
    else n.q0[i] = d.Y[i], n.q1[i] = d.Y[i] + 2.0;
  }
  CHECK(var_aipw(d, n, 2.0) == doctest::Approx(0.0));
  CHECK(var_naipw(d, n, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("Dx: aipw variance explodes, naipw variance stays bounded") {
  Dataset d = dx_data();
  NuisanceEstimates n = dx_nuisances();
  const double a = gdr(d, n, WeightScheme::aipw).beta_hat;
  const double b = gdr(d, n, WeightScheme::naipw).beta_hat;
  const double va = var_aipw(d, n, a);
  const double vn = var_naipw(d, n, b);
  CHECK(va > 1e10);
  CHECK(va < 1e12);
  // Three summands, each at most (max residual + |sr - beta|)^2 = (1 + 1)^2.
  CHECK(vn <= 3.0 * 4.0);
}

TEST_CASE("truncated sandwich equals var_naipw on random inputs") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RandomCase c = random_case(50 + 37 * static_cast<Index>(seed), seed);
    const SandwichParts<double> s = sandwich_parts(c.data, c.nuis);
    const double beta = gdr(c.data, c.nuis, WeightScheme::naipw).beta_hat;
    const double v = var_naipw(c.data, c.nuis, beta);
    CHECK(std::abs(s.truncated - v) <= 1e-12 * std::max(1.0, v));
  }
}

TEST_CASE("estimating equations vanish at the fitted triple") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RandomCase c = random_case(4000, seed);
    const ScoreComponents<double> s = fitted_score_components(c.data, c.nuis);
    const double n = 4000.0;
    CHECK(std::abs(s.phi.sum()) <= 1e-10 * n);
    CHECK(std::abs(s.eta.sum()) <= 1e-10 * n);
    CHECK(std::abs(s.omega.sum()) <= 1e-10 * n);
  }
}

TEST_CASE("meat matrix is positive semidefinite") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RandomCase c = random_case(30 + 11 * static_cast<Index>(seed), seed + 100);
    const SandwichParts<double> s = sandwich_parts(c.data, c.nuis);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s.meat);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, top));
  }
}

TEST_CASE("information matrix at arm-share propensities") {
  Dataset d = d4_data();
  NuisanceEstimates n = d4_nuisances();
  const SandwichParts<double> s = sandwich_parts(d, n);
  // gamma = lambda = n = 4, so the (1,1) entry gamma*lambda/n^2 is 1.
  CHECK(s.information(0, 0) == doctest::Approx(1.0));
  CHECK(s.information(1, 0) == 0.0);
  CHECK(s.information(2, 0) == 0.0);
  CHECK(s.information(2, 1) == 0.0);
  CHECK(s.information(1, 2) == 0.0);
}

TEST_CASE("remainder diagnostic") {
  Dataset d = gen_dataset(default_spec(400));
  const NuisanceEstimates oracle = oracle_nuisances(d);
  const auto [r1, r0] = remainder_diagnostic(d, oracle, *d.truth, WeightScheme::aipw);
  CHECK(r1 == 0.0);
  CHECK(r0 == 0.0);

  NuisanceEstimates wrong_q = oracle;
  wrong_q.q1.array() += 1.0;
  const auto [w1, w0] = remainder_diagnostic(d, wrong_q, *d.truth, WeightScheme::aipw);
  CHECK(w1 == 0.0);  // h1 = g exactly
  CHECK(w0 == 0.0);

  NuisanceEstimates both = wrong_q;
  both.g = (both.g.array() * 0.8 + 0.1).matrix();
  const auto [b1, b0] = remainder_diagnostic(d, both, *d.truth, WeightScheme::naipw);
  CHECK(b1 > 0.0);
  CHECK(b0 == 0.0);  // Q0 still exact
}

TEST_CASE("standard errors are attached to aipw and naipw only") {
  RandomCase c = random_case(120, 17);
  const auto all = estimate_all(c.data, c.nuis);
  REQUIRE(all.size() == 7);
  for (const auto& r : all) {
    const bool has = r.estimator == "aipw" || r.estimator == "naipw";
    CHECK(r.sigma_hat.has_value() == has);
  }
}
