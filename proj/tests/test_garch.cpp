#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nadjust/garch.hpp"
#include "nadjust/rng.hpp"

using namespace nadjust;

namespace {
const GarchParams kTruth{0.1, 0.05, 0.90};

ReturnSeries series_of(std::initializer_list<double> vals) {
  ReturnSeries s;
  s.y = vals;
  return s;
}
}  // namespace

TEST_CASE("variance recursion: hand-computed path and bounds", "[garch]") {
  const ReturnSeries s = series_of({1.0, 2.0});
  const Vec path = sigma2_path(s, {1.0, 0.2, 0.3});
  REQUIRE(path.size() == 3);  // T entries plus the one-step forecast
  CHECK(path[0] == Catch::Approx(2.0));
  CHECK(path[1] == Catch::Approx(1.8));
  CHECK(path[2] == Catch::Approx(2.34));

  // a = b = 0 collapses to the constant path
  const Vec flat = sigma2_path(s, {0.7, 0.0, 0.0});
  for (double v : flat) CHECK(v == Catch::Approx(0.7));

  // every entry is bounded below by omega, and raising omega raises the path
  RngStream rng(14, 0);
  const ReturnSeries sim = garch_simulate(kTruth, 300, 500, rng);
  const Vec lo = sigma2_path(sim, {0.1, 0.1, 0.6});
  const Vec hi = sigma2_path(sim, {0.2, 0.1, 0.6});
  for (std::size_t t = 0; t < lo.size(); ++t) {
    CHECK(lo[t] >= 0.1);
    CHECK(hi[t] > lo[t]);
  }
}

TEST_CASE("parameter constraints are enforced", "[garch]") {
  const ReturnSeries s = series_of({1.0});
  CHECK_THROWS_AS(sigma2_path(s, {0.0, 0.1, 0.1}), InvalidParams);
  CHECK_THROWS_AS(sigma2_path(s, {1.0, -0.1, 0.1}), InvalidParams);
  CHECK_THROWS_AS(sigma2_path(s, {1.0, 0.1, -0.1}), InvalidParams);
  CHECK_THROWS_AS(sigma2_path(s, {1.0, 0.5, 0.5}), InvalidParams);
}

TEST_CASE("simulation variance matches the stationary value", "[garch][slow]") {
  // white noise: sample variance near omega
  RngStream r1(15, 0);
  const ReturnSeries wn = garch_simulate({2.0, 0.0, 0.0}, 100000, 500, r1);
  double v = 0.0;
  for (double y : wn.y) v += y * y;
  v /= double(wn.size());
  CHECK(v == Catch::Approx(2.0).epsilon(0.03));

  // persistent case: unconditional variance omega / (1 - a - b) = 2.0
  RngStream r2(15, 1);
  const ReturnSeries g = garch_simulate(kTruth, 100000, 500, r2);
  v = 0.0;
  for (double y : g.y) v += y * y;
  v /= double(g.size());
  CHECK(v == Catch::Approx(2.0).epsilon(0.05));
}

TEST_CASE("simulation is seed-deterministic", "[garch]") {
  RngStream r1(16, 0), r2(16, 0);
  const ReturnSeries a = garch_simulate(kTruth, 200, 500, r1);
  const ReturnSeries b = garch_simulate(kTruth, 200, 500, r2);
  CHECK(a.y == b.y);
}

TEST_CASE("negative log-likelihood direct evaluations", "[garch]") {
  // a = b = 0, omega = 1: exactly the i.i.d. standard-normal NLL
  const ReturnSeries s = series_of({0.3, -1.2, 0.8, 2.1});
  double iid = 0.0;
  for (double y : s.y) iid += 0.5 * std::log(2.0 * M_PI) + 0.5 * y * y;
  CHECK(garch_neg_loglik(s, {1.0, 0.0, 0.0}) == Catch::Approx(iid).epsilon(1e-12));

  // scaling omega by c and the data by sqrt(c) scales every sigma_t^2 by c,
  // leaving y^2/sigma^2 invariant; the log terms shift by (T/2) ln c
  const double c = 4.0;
  ReturnSeries sc;
  for (double y : s.y) sc.y.push_back(std::sqrt(c) * y);
  const GarchParams base{0.5, 0.1, 0.5};
  const GarchParams scaled{c * 0.5, 0.1, 0.5};
  const double shift = 0.5 * double(s.size()) * std::log(c);
  CHECK(garch_neg_loglik(sc, scaled) ==
        Catch::Approx(garch_neg_loglik(s, base) + shift).epsilon(1e-12));
}

TEST_CASE("likelihood prefers the generating parameters", "[garch][slow]") {
  // a less persistent truth so the +0.1 bump on a stays inside the
  // constraint set
  const GarchParams truth{0.1, 0.05, 0.70};
  const GarchParams bumped{0.1, 0.15, 0.70};
  int wins = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    RngStream rng(17, k);
    const ReturnSeries s = garch_simulate(truth, 2000, 500, rng);
    if (garch_neg_loglik(s, truth) < garch_neg_loglik(s, bumped)) ++wins;
  }
  CHECK(wins >= 95);
}

TEST_CASE("analytic score agrees with finite differences on a grid", "[garch]") {
  RngStream rng(18, 0);
  const ReturnSeries s = garch_simulate(kTruth, 500, 500, rng);
  const double as[5] = {0.02, 0.05, 0.10, 0.20, 0.30};
  const double bs[5] = {0.10, 0.30, 0.50, 0.65, 0.55};
  for (double a : as)
    for (double b : bs) {
      const GarchParams p{0.1, a, b};
      const Vec sc = garch_score_primary(s, p);
      const Vec fd = finite_diff_gradient(
          [&](const Vec& ab) { return -garch_neg_loglik(s, {0.1, ab[0], ab[1]}); }, {a, b}, {});
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(sc[j] == Catch::Approx(fd[j]).epsilon(1e-5).margin(1e-6));
    }

  // full score includes the intercept coordinate
  const GarchParams p{0.15, 0.08, 0.6};
  const Vec full = garch_score_full(s, p);
  const Vec fd = finite_diff_gradient(
      [&](const Vec& x) { return -garch_neg_loglik(s, {x[0], x[1], x[2]}); },
      {p.omega, p.a, p.b}, {});
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(full[j] == Catch::Approx(fd[j]).epsilon(1e-5).margin(1e-6));
}

TEST_CASE("score is unbiased at the truth", "[garch][slow]") {
  // white noise of variance omega: the expected full score at the truth is
  // zero; a self-normalized mean over independent seeds certifies it
  const double omega = 1.5;
  const std::size_t K = 100, T = 2000;
  std::vector<Vec> per_seed;
  for (std::uint64_t k = 0; k < K; ++k) {
    RngStream rng(19, k);
    const ReturnSeries s = garch_simulate({omega, 0.0, 0.0}, T, 100, rng);
    Vec sc = garch_score_full(s, {omega, 0.0, 0.0});
    for (double& v : sc) v /= double(T);
    per_seed.push_back(sc);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (const Vec& v : per_seed) mean += v[j];
    mean /= double(K);
    double sd = 0.0;
    for (const Vec& v : per_seed) sd += (v[j] - mean) * (v[j] - mean);
    sd = std::sqrt(sd / double(K - 1));
    CHECK(std::abs(mean) <= 4.0 * sd / std::sqrt(double(K)) + 1e-12);
  }
}

TEST_CASE("primary fit recovers the truth at large T", "[garch][slow]") {
  RngStream rng(41, 0);
  const ReturnSeries s = garch_simulate(kTruth, 100000, 500, rng);
  const GarchPrimaryFit fit = garch_fit_primary(s, kTruth.omega);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.a - kTruth.a) < 0.01);
  CHECK(std::abs(fit.b - kTruth.b) < 0.02);

  // the score is stationary at the reported optimum
  const Vec sc = garch_score_primary(s, {kTruth.omega, fit.a, fit.b});
  CHECK(std::abs(sc[0]) < 1e-6);
  CHECK(std::abs(sc[1]) < 1e-6);
}

TEST_CASE("primary fit beats a lattice search", "[garch][slow]") {
  RngStream rng(43, 0);
  const ReturnSeries s = garch_simulate(kTruth, 5000, 500, rng);
  const GarchPrimaryFit fit = garch_fit_primary(s, kTruth.omega);
  REQUIRE(fit.converged);
  double grid_best = 1e300;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double a = 0.002 * i;          // [0, 0.2]
      const double b = 0.78 + 0.002 * j;   // [0.78, 0.98]
      if (a + b > 1.0 - kGarchSumMargin) continue;
      grid_best = std::min(grid_best, garch_neg_loglik(s, {kTruth.omega, a, b}));
    }
  CHECK(fit.nll <= grid_best + 1e-9);
}

TEST_CASE("primary fit guards and boundary flag", "[garch]") {
  CHECK_THROWS_AS(garch_fit_primary(series_of({1.0, 2.0}), 1.0), InvalidData);

  ReturnSeries zeros;
  zeros.y.assign(100, 0.0);
  CHECK_THROWS_AS(garch_fit_primary(zeros, 1.0), InvalidData);

  CHECK_THROWS_AS(garch_fit_primary(zeros, 0.0), InvalidParams);

  // white noise with the intercept already explaining the variance: the
  // optimum sits on the a = 0 edge and must be flagged
  RngStream rng(20, 0);
  const ReturnSeries wn = garch_simulate({1.0, 0.0, 0.0}, 2000, 100, rng);
  const GarchPrimaryFit fit = garch_fit_primary(wn, 1.0);
  CHECK(fit.boundary_solution);
  CHECK(fit.a < 0.05);
}

TEST_CASE("intercept fit: white noise and persistence discrimination", "[garch][slow]") {
  // white noise: restricted model wins, omega_hat is the sample second
  // moment, and its variance matches the i.i.d. Gaussian value 2 v^2 / m
  RngStream r1(21, 0);
  const ReturnSeries wn = garch_simulate({1.5, 0.0, 0.0}, 5000, 100, r1);
  const GarchOmegaFit wf = garch_fit_omega(wn);
  CHECK(wf.used_restricted);
  double vhat = 0.0;
  for (double y : wn.y) vhat += y * y;
  vhat /= double(wn.size());
  CHECK(wf.omega_hat == Catch::Approx(vhat).epsilon(1e-12));
  CHECK(wf.a == 0.0);
  CHECK(wf.b == 0.0);
  const double vv = wf.v_omega_over_m * double(wn.size());
  CHECK(vv == Catch::Approx(2.0 * vhat * vhat).epsilon(0.15));

  // genuinely persistent series: the likelihood-ratio rule keeps the full fit
  RngStream r2(21, 1);
  const ReturnSeries g = garch_simulate(kTruth, 5000, 500, r2);
  const GarchOmegaFit gf = garch_fit_omega(g);
  CHECK_FALSE(gf.used_restricted);
  CHECK(gf.lrt > 6.0);
  CHECK(gf.b > 0.5);

  // determinism
  RngStream r3(21, 0);
  const ReturnSeries wn2 = garch_simulate({1.5, 0.0, 0.0}, 5000, 100, r3);
  const GarchOmegaFit wf2 = garch_fit_omega(wn2);
  CHECK(wf2.omega_hat == wf.omega_hat);
  CHECK(wf2.v_omega_over_m == wf.v_omega_over_m);
}

TEST_CASE("pipeline with exact nuisance collapses to the plain fit", "[garch]") {
  RngStream rng(22, 0);
  const ReturnSeries s = garch_simulate(kTruth, 1000, 500, rng);
  GarchPipelineOptions opts;
  opts.omega_override = kTruth.omega;
  opts.v_omega_override = 0.0;
  const GarchPipelineResult res = garch_adjusted_pipeline(s, {}, opts);
  CHECK_FALSE(res.omega_fit_ran);
  CHECK(frobenius(res.pair.adjusted - res.pair.unadjusted) < 1e-12);
  CHECK(res.adjusted.radius2 == Catch::Approx(res.unadjusted.radius2));
  CHECK(ellipse_area(res.adjusted) == Catch::Approx(ellipse_area(res.unadjusted)).epsilon(1e-12));
}

TEST_CASE("pipeline widens the region when the nuisance is noisy", "[garch][slow]") {
  RngStream rp(23, 0), rn(23, 1);
  const ReturnSeries prim = garch_simulate(kTruth, 1000, 500, rp);
  const ReturnSeries nuis = garch_simulate(kTruth, 1000, 500, rn);
  const GarchPipelineResult res = garch_adjusted_pipeline(prim, nuis);
  CHECK(res.omega_fit_ran);
  CHECK(res.v_omega_over_m > 0.0);
  const Mat diff = res.pair.adjusted - res.pair.unadjusted;
  CHECK(min_eig_at_least(diff, 1e-10 * trace(res.pair.adjusted)));
  CHECK(ellipse_area(res.adjusted) > ellipse_area(res.unadjusted));
}
