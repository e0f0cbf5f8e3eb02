#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nadjust/adjust.hpp"
#include "nadjust/expreg.hpp"
#include "nadjust/rng.hpp"

using namespace nadjust;

namespace {

Mat random_spd(RngStream& rng, std::size_t d, double ridge = 0.05) {
  Mat g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal();
  return matmul(g, transpose(g)) + ridge * Mat::identity(d);
}

}  // namespace

TEST_CASE("sensitivity solve sign and trivial cases", "[adjust]") {
  // no coupling: zero cross-derivatives give a zero sensitivity
  Mat h = -1.0 * Mat::identity(2);
  Mat zero(2, 1);
  CHECK(max_abs(sensitivity_d1(h, zero).d1) < 1e-14);

  // hessian -I: D1 = -(H)^-1 C = C
  Mat c(2, 1);
  c(0, 0) = 0.7;
  c(1, 0) = -1.2;
  Mat d1 = sensitivity_d1(h, c).d1;
  CHECK(d1(0, 0) == Catch::Approx(0.7));
  CHECK(d1(1, 0) == Catch::Approx(-1.2));
}

TEST_CASE("sensitivity matches a refit-perturbation oracle", "[adjust][slow]") {
  // Independent oracle for D1 = d theta_hat / d alpha: refit the primary
  // parameters with the nuisance pinned at alpha +/- delta and take the
  // central-difference slope of the optimizer path.
  const ExpRegParams truth{0.5, -0.3, 0.8};
  RngStream rng(31, 0);
  const ExpRegData d = expreg_simulate(truth, 5000, {}, rng);
  const std::vector<std::size_t> prim{0, 2}, nuis{1};

  ExpRegParams start;
  start.b1 = truth.b1;
  const ExpRegFit fit = expreg_fit(d, prim, start);
  REQUIRE(fit.converged);

  Mat h_tt = expreg_hessian(fit.params, d, prim, prim);
  Mat h_ta = expreg_hessian(fit.params, d, prim, nuis);
  Mat d1 = sensitivity_d1(h_tt, h_ta).d1;

  const double delta = 1e-3;
  auto refit_at = [&](double alpha) {
    ExpRegParams s = fit.params;
    s.b1 = alpha;
    const ExpRegFit f = expreg_fit(d, prim, s);
    REQUIRE(f.converged);
    return Vec{f.params.b0, f.params.b2};
  };
  const Vec up = refit_at(truth.b1 + delta), dn = refit_at(truth.b1 - delta);
  for (std::size_t i = 0; i < 2; ++i) {
    const double slope = (up[i] - dn[i]) / (2.0 * delta);
    CHECK(d1(i, 0) == Catch::Approx(slope).epsilon(5e-2));
  }
}

TEST_CASE("adjusted covariance arithmetic and degenerate limits", "[adjust]") {
  Mat v(1, 1), va(1, 1), d1(1, 1);
  v(0, 0) = 0.04;
  d1(0, 0) = 2.0;
  va(0, 0) = 0.01;
  CovariancePair p = adjusted_covariance(v, {d1}, va, 10, 5);
  CHECK(p.adjusted(0, 0) == Catch::Approx(0.08));
  CHECK(p.unadjusted(0, 0) == Catch::Approx(0.04));
  CHECK(p.n == 10);
  CHECK(p.m == 5);

  // exact nuisance: no widening at all
  va(0, 0) = 0.0;
  p = adjusted_covariance(v, {d1}, va, 10, 5);
  CHECK(frobenius(p.adjusted - p.unadjusted) < 1e-15);

  // no sensitivity: no widening either
  va(0, 0) = 0.01;
  d1(0, 0) = 0.0;
  p = adjusted_covariance(v, {d1}, va, 10, 5);
  CHECK(frobenius(p.adjusted - p.unadjusted) < 1e-15);

  Mat bad(2, 2);
  CHECK_THROWS_AS(adjusted_covariance(v, {d1}, bad, 1, 1), DimensionMismatch);
}

TEST_CASE("adjustment only ever adds uncertainty", "[adjust][property]") {
  RngStream rng(17, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + std::size_t(trial % 3), q = 1 + std::size_t(trial % 2);
    Mat v = random_spd(rng, k);
    Mat va = random_spd(rng, q);
    Mat d1(k, q);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < q; ++j) d1(i, j) = rng.normal();
    CovariancePair p = adjusted_covariance(v, {d1}, va, 100, 10);
    const Mat diff = p.adjusted - p.unadjusted;
    CHECK(min_eig_at_least(diff, 1e-10 * std::max(1.0, trace(p.adjusted))));
    CHECK(max_abs(p.adjusted - transpose(p.adjusted)) <= 1e-10 * max_abs(p.adjusted));
  }
}

TEST_CASE("confidence ellipse closed-form calibration", "[adjust]") {
  EllipseSpec e = confidence_ellipse({0.0, 0.0}, Mat::identity(2), 0.90);
  CHECK(e.radius2 == Catch::Approx(4.605170).margin(1e-5));

  // circle of radius sqrt(radius2)
  CHECK(ellipse_contains(e, {2.14, 0.0}));
  CHECK_FALSE(ellipse_contains(e, {2.15, 0.0}));

  Mat d41(2, 2);
  d41(0, 0) = 4.0;
  d41(1, 1) = 1.0;
  EllipseSpec e2 = confidence_ellipse({0.0, 0.0}, d41, 0.90);
  const double axis = std::sqrt(e2.radius2);
  // semi-axes 2*2.1460 and 1*2.1460 along the coordinate axes
  CHECK(ellipse_contains(e2, {2.0 * axis * (1.0 - 1e-9), 0.0}));
  CHECK_FALSE(ellipse_contains(e2, {2.0 * axis * (1.0 + 1e-6), 0.0}));
  CHECK(ellipse_contains(e2, {0.0, axis * (1.0 - 1e-9)}));
  CHECK_FALSE(ellipse_contains(e2, {0.0, axis * (1.0 + 1e-6)}));

  Mat degenerate(2, 2);
  degenerate(0, 0) = 1.0;
  CHECK_THROWS_AS(confidence_ellipse({0.0, 0.0}, degenerate, 0.9), SingularMatrix);
}

TEST_CASE("ellipse containment boundary conventions", "[adjust]") {
  RngStream rng(23, 0);
  Mat cov = random_spd(rng, 2);
  EllipseSpec e = confidence_ellipse({1.0, -2.0}, cov, 0.9);
  CHECK(ellipse_contains(e, {1.0, -2.0}));

  Eig2 ev = eig_sym_2x2(cov);
  const double r = std::sqrt(e.radius2 * ev.l1);
  // a point built on the major axis: just inside and clearly outside
  CHECK(ellipse_contains(e, {1.0 + r * ev.v1x * (1.0 - 1e-9), -2.0 + r * ev.v1y * (1.0 - 1e-9)}));
  CHECK_FALSE(ellipse_contains(e, {1.0 + 10.0 * r * ev.v1x, -2.0 + 10.0 * r * ev.v1y}));
}

TEST_CASE("ellipse coverage against Monte Carlo draws", "[adjust][slow]") {
  Mat cov(2, 2);
  cov(0, 0) = 2.0;
  cov(0, 1) = cov(1, 0) = 0.5;
  cov(1, 1) = 1.0;
  EllipseSpec e = confidence_ellipse({0.0, 0.0}, cov, 0.90);

  // sample via the Cholesky factor of cov
  Mat l;
  REQUIRE(cholesky(cov, l));
  RngStream rng(101, 0);
  int inside = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    const Vec x{l(0, 0) * z1, l(1, 0) * z1 + l(1, 1) * z2};
    if (ellipse_contains(e, x)) ++inside;
  }
  CHECK(double(inside) / n == Catch::Approx(0.90).margin(0.01));
}

TEST_CASE("ellipse area grows with the covariance and ignores rotation", "[adjust][property]") {
  RngStream rng(29, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Mat cov = random_spd(rng, 2);
    Mat bump = random_spd(rng, 2, 0.01);
    EllipseSpec small = confidence_ellipse({0.0, 0.0}, cov, 0.9);
    EllipseSpec big = confidence_ellipse({0.0, 0.0}, cov + bump, 0.9);
    CHECK(ellipse_area(big) >= ellipse_area(small));

    // rotate: R cov R' has the same determinant, so the same area
    const double t = rng.uniform() * 6.283185307179586;
    Mat r(2, 2);
    r(0, 0) = std::cos(t);
    r(0, 1) = -std::sin(t);
    r(1, 0) = std::sin(t);
    r(1, 1) = std::cos(t);
    EllipseSpec rot = confidence_ellipse({0.0, 0.0}, matmul(r, matmul(cov, transpose(r))), 0.9);
    CHECK(ellipse_area(rot) == Catch::Approx(ellipse_area(small)).epsilon(1e-9));
  }
}

TEST_CASE("delta-method interval endpoints", "[adjust]") {
  Interval i = delta_method_ci(1.0, {0.0, 0.0}, Mat::identity(2), 0.9);
  CHECK(i.lo == Catch::Approx(1.0));
  CHECK(i.hi == Catch::Approx(1.0));

  Mat s(1, 1);
  s(0, 0) = 0.25;
  i = delta_method_ci(2.0, {1.0}, s, 0.90);
  CHECK(i.hi - i.mu == Catch::Approx(1.644854 * 0.5).margin(1e-5));
  CHECK(i.mu - i.lo == Catch::Approx(1.644854 * 0.5).margin(1e-5));

  i = delta_method_ci(0.0, {3.0, 4.0}, Mat::identity(2), 0.90);
  CHECK(i.hi == Catch::Approx(two_sided_z(0.90) * 5.0).margin(1e-9));

  // compatibility quantile widens the 90% interval to the 1.96 convention
  Interval c = delta_method_ci(0.0, {3.0, 4.0}, Mat::identity(2), 0.90, true);
  CHECK(c.hi == Catch::Approx(1.959964 * 5.0).margin(1e-4));

  Mat neg(1, 1);
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(delta_method_ci(0.0, {1.0}, neg, 0.9), NegativeVariance);
}
