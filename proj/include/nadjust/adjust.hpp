#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nadjust/mat.hpp"
#include "nadjust/quantiles.hpp"

namespace nadjust {

// Split of a full parameter vector into the primary block (whose confidence
// region is the deliverable) and the nuisance block (fixed from an
// independent source, with its own sampling uncertainty).
struct ParamPartition {
  Vec full;
  std::vector<std::size_t> primary_idx;
  std::vector<std::size_t> nuisance_idx;

  void validate() const {
    std::vector<char> seen(full.size(), 0);
    for (std::size_t i : primary_idx) {
      if (i >= full.size() || seen[i]) throw InvalidParams("ParamPartition: bad primary index");
      seen[i] = 1;
    }
    for (std::size_t i : nuisance_idx) {
      if (i >= full.size() || seen[i]) throw InvalidParams("ParamPartition: index reused or out of range");
      seen[i] = 1;
    }
    for (char c : seen)
      if (!c) throw InvalidParams("ParamPartition: indices do not cover the full vector");
  }
};

// d(theta_hat)/d(alpha): how far the constrained optimum moves per unit of
// nuisance perturbation. Rows index primary parameters, columns nuisance.
struct SensitivityMatrix {
  Mat d1;
};

// Unadjusted covariance V_theta/n next to the total covariance
// V_theta/n + D1 (V_alpha/m) D1', together with the pieces used to build it.
struct CovariancePair {
  Mat unadjusted;
  Mat adjusted;
  SensitivityMatrix d1;
  Mat v_alpha_over_m;
  std::size_t n = 0;
  std::size_t m = 0;
  bool clipped = false;  // PSD post-check had to repair rounding noise
};

// 2-D confidence region {x : (x-c)' cov^{-1} (x-c) <= radius2}.
struct EllipseSpec {
  Vec center;   // length 2
  Mat cov;      // 2x2 SPD
  double level = 0.9;
  double radius2 = 0.0;
};

// D1 = -(ds/dtheta')^{-1} (ds/dalpha'). The score Jacobian at an interior
// maximum is negative definite, so the SPD solver runs on its negation; a
// positive-definite input (e.g. tests passing a Hessian of a minimum) is
// handled by the sign algebra instead of being rejected.
inline SensitivityMatrix sensitivity_d1(const Mat& hessian_theta, const Mat& cross_jacobian) {
  if (hessian_theta.rows != hessian_theta.cols)
    throw DimensionMismatch("sensitivity_d1: hessian block not square");
  if (hessian_theta.rows != cross_jacobian.rows)
    throw DimensionMismatch("sensitivity_d1: hessian and cross-jacobian row counts differ");

  bool neg_diag = true, pos_diag = true;
  for (std::size_t i = 0; i < hessian_theta.rows; ++i) {
    if (hessian_theta(i, i) >= 0.0) neg_diag = false;
    if (hessian_theta(i, i) <= 0.0) pos_diag = false;
  }
  if (neg_diag) {
    // D1 = -H^{-1} C = (-H)^{-1} C
    return {solve_spd(-1.0 * hessian_theta, cross_jacobian).x};
  }
  if (pos_diag) {
    return {-1.0 * solve_spd(hessian_theta, cross_jacobian).x};
  }
  throw SingularMatrix("sensitivity_d1: score Jacobian is indefinite (mixed diagonal signs)");
}

// Total covariance of the primary estimate when the nuisance value carries
// sampling noise: unadjusted + D1 (V_alpha/m) D1', symmetrized. The
// adjustment term is PSD, so the pair must satisfy adjusted >= unadjusted in
// the Loewner order; finite-difference noise can break this at rounding
// scale, in which case the difference is repaired (2x2: eigenvalue clip,
// larger: diagonal lift) and flagged rather than failing a long run.
inline CovariancePair adjusted_covariance(const Mat& v_theta_over_n, const SensitivityMatrix& d1,
                                          const Mat& v_alpha_over_m, std::size_t n = 0,
                                          std::size_t m = 0) {
  const Mat& d = d1.d1;
  if (d.cols != v_alpha_over_m.rows || v_alpha_over_m.rows != v_alpha_over_m.cols)
    throw DimensionMismatch("adjusted_covariance: V_alpha/m shape incompatible with D1");
  if (d.rows != v_theta_over_n.rows || v_theta_over_n.rows != v_theta_over_n.cols)
    throw DimensionMismatch("adjusted_covariance: V_theta/n shape incompatible with D1");

  CovariancePair out;
  out.unadjusted = symmetrize(v_theta_over_n);
  out.d1 = d1;
  out.v_alpha_over_m = symmetrize(v_alpha_over_m);
  out.n = n;
  out.m = m;

  Mat add = matmul(matmul(d, out.v_alpha_over_m), transpose(d));
  out.adjusted = symmetrize(out.unadjusted + add);

  Mat diff = out.adjusted - out.unadjusted;
  const double tol = 1e-10 * std::max(trace(out.adjusted), 1e-300);
  if (!min_eig_at_least(diff, tol)) {
    out.clipped = true;
    if (diff.rows == 2) {
      Eig2 e = eig_sym_2x2(diff);
      double l1 = std::max(e.l1, 0.0), l2 = std::max(e.l2, 0.0);
      double v2x = -e.v1y, v2y = e.v1x;
      Mat rep(2, 2);
      rep(0, 0) = l1 * e.v1x * e.v1x + l2 * v2x * v2x;
      rep(0, 1) = rep(1, 0) = l1 * e.v1x * e.v1y + l2 * v2x * v2y;
      rep(1, 1) = l1 * e.v1y * e.v1y + l2 * v2y * v2y;
      out.adjusted = symmetrize(out.unadjusted + rep);
    } else {
      Mat lifted = out.adjusted;
      for (std::size_t i = 0; i < lifted.rows; ++i) lifted(i, i) += tol;
      out.adjusted = lifted;
    }
  }
  return out;
}

inline EllipseSpec confidence_ellipse(const Vec& center, const Mat& cov, double level) {
  if (center.size() != 2 || cov.rows != 2 || cov.cols != 2)
    throw DimensionMismatch("confidence_ellipse: containment geometry is 2-D");
  Mat s = symmetrize(cov);
  double det = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
  if (!(det > 0.0) || !(s(0, 0) > 0.0))
    throw SingularMatrix("confidence_ellipse: covariance is rank deficient");
  EllipseSpec e;
  e.center = center;
  e.cov = s;
  e.level = level;
  e.radius2 = chi2_quantile_df2(level);
  return e;
}

// Boundary counts as contained.
inline bool ellipse_contains(const EllipseSpec& e, const Vec& point) {
  if (point.size() != 2) throw DimensionMismatch("ellipse_contains: need a 2-D point");
  const Mat& s = e.cov;
  double det = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
  double dx = point[0] - e.center[0], dy = point[1] - e.center[1];
  // closed-form 2x2 inverse quadratic form
  double q = (s(1, 1) * dx * dx - 2.0 * s(0, 1) * dx * dy + s(0, 0) * dy * dy) / det;
  return q <= e.radius2;
}

inline double ellipse_area(const EllipseSpec& e) {
  const Mat& s = e.cov;
  double det = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
  return M_PI * e.radius2 * std::sqrt(std::max(det, 0.0));
}

struct Interval {
  double mu = 0.0, lo = 0.0, hi = 0.0;
};

// First-order (delta method) two-sided interval for a smooth scalar output:
// mu +/- z * sqrt(g' Sigma g). Tiny negative quadratic forms from rounding
// are clamped to zero; anything beyond -1e-12 means the caller handed in a
// broken covariance.
inline Interval delta_method_ci(double mu_hat, const Vec& g, const Mat& sigma, double level,
                                bool compat_quantile = false) {
  if (sigma.rows != g.size() || sigma.cols != g.size())
    throw DimensionMismatch("delta_method_ci: sigma shape does not match g");
  double var = quad_form(g, sigma);
  if (var < -1e-12) throw NegativeVariance("delta_method_ci: g' Sigma g is negative");
  var = std::max(var, 0.0);
  const double z = two_sided_z(level, compat_quantile);
  const double half = z * std::sqrt(var);
  return {mu_hat, mu_hat - half, mu_hat + half};
}

}  // namespace nadjust
