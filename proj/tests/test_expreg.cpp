#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nadjust/expreg.hpp"
#include "nadjust/rng.hpp"

using namespace nadjust;

namespace {
const ExpRegParams kTruth{0.5, -0.3, 0.8};
}

TEST_CASE("simulation is seed-deterministic", "[expreg]") {
  RngStream r1(3, 0), r2(3, 0);
  const ExpRegData a = expreg_simulate(kTruth, 100, {}, r1);
  const ExpRegData b = expreg_simulate(kTruth, 100, {}, r2);
  CHECK(a.y == b.y);
  CHECK(a.x1 == b.x1);
  CHECK(a.x2 == b.x2);
}

TEST_CASE("simulated responses match the exponential mean", "[expreg][slow]") {
  RngStream rng(4, 0);
  const ExpRegData flat = expreg_simulate({0.0, 0.0, 0.0}, 100000, {}, rng);
  double mean = 0.0;
  for (double v : flat.y) mean += v;
  mean /= double(flat.n());
  CHECK(mean > 0.99);
  CHECK(mean < 1.01);

  // rate-2 exponential has mean one half
  RngStream rng2(5, 0);
  const ExpRegData rate2 = expreg_simulate({std::log(2.0), 0.0, 0.0}, 100000, {}, rng2);
  mean = 0.0;
  for (double v : rate2.y) mean += v;
  mean /= double(rate2.n());
  CHECK(mean == Catch::Approx(0.5).epsilon(0.01));
}

TEST_CASE("log-likelihood direct evaluations", "[expreg]") {
  ExpRegData d;
  d.x1 = {0.0};
  d.x2 = {0.0};
  d.y = {1.0};
  CHECK(expreg_loglik({0.0, 0.0, 0.0}, d) == Catch::Approx(-1.0));

  ExpRegData empty;
  CHECK(expreg_loglik(kTruth, empty) == 0.0);

  // density-product oracle at an arbitrary point
  ExpRegData r;
  r.x1 = {0.4, -1.1};
  r.x2 = {0.9, 0.2};
  r.y = {0.7, 2.3};
  const ExpRegParams p{0.1, -0.5, 0.3};
  double expect = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double lam = std::exp(p.b0 + p.b1 * r.x1[i] + p.b2 * r.x2[i]);
    expect += std::log(lam * std::exp(-lam * r.y[i]));
  }
  CHECK(expreg_loglik(p, r) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("analytic score agrees with finite differences", "[expreg]") {
  RngStream rng(6, 0);
  const ExpRegData d = expreg_simulate(kTruth, 200, {}, rng);
  RngStream pr(6, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const ExpRegParams p{0.5 * pr.normal(), 0.5 * pr.normal(), 0.5 * pr.normal()};
    const Vec s = expreg_score(p, d, ParamSubset::all);
    const Vec fd = finite_diff_gradient(
        [&](const Vec& b) { return expreg_loglik(ExpRegParams::from_vec(b), d); }, p.as_vec(), {});
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(s[j] == Catch::Approx(fd[j]).epsilon(1e-6).margin(1e-8));
  }
}

TEST_CASE("score vanishes when every rate matches its response", "[expreg]") {
  // lambda_i * y_i = 1 for all i kills every score term
  ExpRegData d;
  d.x1 = {0.3, -0.8, 1.2};
  d.x2 = {-0.1, 0.5, 0.9};
  const ExpRegParams p{0.2, 0.4, -0.6};
  for (std::size_t i = 0; i < 3; ++i)
    d.y.push_back(std::exp(-(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i])));
  const Vec s = expreg_score(p, d, ParamSubset::all);
  for (double v : s) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("fit is consistent at large n", "[expreg][slow]") {
  RngStream rng(8, 0);
  const ExpRegData d = expreg_simulate(kTruth, 100000, {}, rng);
  const ExpRegFit fit = expreg_fit(d, {0, 1, 2}, {});
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.params.b0 - kTruth.b0) < 0.02);
  CHECK(std::abs(fit.params.b1 - kTruth.b1) < 0.02);
  CHECK(std::abs(fit.params.b2 - kTruth.b2) < 0.02);
}

TEST_CASE("fit beats a coarse grid search", "[expreg][slow]") {
  RngStream rng(9, 0);
  const ExpRegData d = expreg_simulate(kTruth, 1000, {}, rng);
  const ExpRegFit fit = expreg_fit(d, {0, 1, 2}, {});
  REQUIRE(fit.converged);
  const double best = expreg_loglik(fit.params, d);
  // 41^3 lattice spanning +/-0.5 around the truth
  double grid_best = -1e300;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j)
      for (int k = 0; k <= 40; ++k) {
        const ExpRegParams p{kTruth.b0 - 0.5 + 0.025 * i, kTruth.b1 - 0.5 + 0.025 * j,
                             kTruth.b2 - 0.5 + 0.025 * k};
        grid_best = std::max(grid_best, expreg_loglik(p, d));
      }
  CHECK(best >= grid_best);
}

TEST_CASE("fit respects pinned coordinates", "[expreg]") {
  RngStream rng(10, 0);
  const ExpRegData d = expreg_simulate(kTruth, 500, {}, rng);

  // everything fixed: nothing to do
  const ExpRegParams init{0.1, 0.2, 0.3};
  const ExpRegFit frozen = expreg_fit(d, {}, init);
  CHECK(frozen.converged);
  CHECK(frozen.iters == 0);
  CHECK(frozen.params.b0 == init.b0);
  CHECK(frozen.params.b1 == init.b1);
  CHECK(frozen.params.b2 == init.b2);

  // plugin-style fit: nuisance pinned, primary block stationary at the end
  ExpRegParams start;
  start.b1 = -0.25;
  const ExpRegFit plugin = expreg_fit(d, {0, 2}, start);
  REQUIRE(plugin.converged);
  CHECK(plugin.params.b1 == -0.25);
  const Vec s = expreg_score(plugin.params, d, ParamSubset::primary);
  CHECK(std::abs(s[0]) < 1e-8);
  CHECK(std::abs(s[1]) < 1e-8);
}

TEST_CASE("scenario covariances: structure and limits", "[expreg][slow]") {
  RngStream ra(12, 0), rb(12, 1);
  const ExpRegData a = expreg_simulate(kTruth, 1000, {}, ra);
  const ExpRegData b = expreg_simulate(kTruth, 50, {}, rb);
  const ExpRegScenarios sc = expreg_scenarios(a, b);

  // the adjustment must only widen (PSD ordering), and the region grows
  const Mat diff = sc.pair.adjusted - sc.pair.unadjusted;
  CHECK(min_eig_at_least(diff, 1e-10 * trace(sc.pair.adjusted)));
  const EllipseSpec e1 = confidence_ellipse(sc.theta_plugin, sc.pair.unadjusted, 0.9);
  const EllipseSpec e2 = confidence_ellipse(sc.theta_plugin, sc.pair.adjusted, 0.9);
  CHECK(ellipse_area(e2) > ellipse_area(e1));

  // a huge nuisance dataset makes the adjustment negligible
  RngStream rbig(12, 2);
  const ExpRegData big = expreg_simulate(kTruth, 1000000, {}, rbig);
  const ExpRegScenarios lim = expreg_scenarios(a, big);
  CHECK(frobenius(lim.pair.adjusted - lim.pair.unadjusted) < 0.05 * frobenius(lim.pair.unadjusted));
}

TEST_CASE("joint-fit variance dominates the plugin variance", "[expreg][slow]") {
  // the joint fit pays for estimating the nuisance from the same data, so
  // its primary-block covariance must dominate the pinned-nuisance one
  for (std::uint64_t seed : {21, 22, 23}) {
    RngStream ra(seed, 0), rb(seed, 1);
    const ExpRegData a = expreg_simulate(kTruth, 20000, {}, ra);
    const ExpRegData b = expreg_simulate(kTruth, 50, {}, rb);
    const ExpRegScenarios sc = expreg_scenarios(a, b);
    const Mat diff = sc.cov_joint - sc.cov_plugin;
    CHECK(min_eig_at_least(diff, 1e-10 * trace(sc.cov_joint)));
  }
}
