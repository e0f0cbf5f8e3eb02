#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "nadjust/adjust.hpp"
#include "nadjust/diff.hpp"
#include "nadjust/fim.hpp"
#include "nadjust/optim.hpp"
#include "nadjust/rng.hpp"

namespace nadjust {

// Stationarity margin: fits constrain a + b <= 1 - kGarchSumMargin.
inline constexpr double kGarchSumMargin = 1e-4;

struct GarchParams {
  double omega = 0.1;  // nuisance: variance intercept
  double a = 0.05;     // shock loading
  double b = 0.90;     // persistence

  void validate() const {
    if (!(omega > 0.0)) throw InvalidParams("GarchParams: omega must be positive");
    if (a < 0.0 || b < 0.0) throw InvalidParams("GarchParams: a and b must be non-negative");
    if (!(a + b < 1.0)) throw InvalidParams("GarchParams: a + b must be below 1 (stationarity)");
  }
};

struct ReturnSeries {
  Vec y;  // zero-mean returns

  std::size_t size() const { return y.size(); }
};

// Conditional-variance recursion sigma_t^2 = omega + a*y_{t-1}^2 +
// b*sigma_{t-1}^2, seeded at the stationary value omega/(1-a-b). Every entry
// is bounded below by omega. The result has T+1 entries: entry t (0-based)
// pairs with observation t, and the final entry is the one-step-ahead
// forecast variance implied by the sample.
inline Vec sigma2_path(const ReturnSeries& s, const GarchParams& p) {
  p.validate();
  const std::size_t T = s.size();
  Vec s2(T + 1);
  s2[0] = p.omega / (1.0 - p.a - p.b);
  for (std::size_t t = 1; t <= T; ++t)
    s2[t] = p.omega + p.a * s.y[t - 1] * s.y[t - 1] + p.b * s2[t - 1];
  return s2;
}

inline ReturnSeries garch_simulate(const GarchParams& p, std::size_t T, std::size_t burn_in,
                                   RngStream& rng) {
  p.validate();
  ReturnSeries out;
  out.y.resize(T);
  double s2 = p.omega / (1.0 - p.a - p.b);
  double prev_y = 0.0;
  for (std::size_t t = 0; t < T + burn_in; ++t) {
    if (t > 0) s2 = p.omega + p.a * prev_y * prev_y + p.b * s2;
    double y = rng.normal() * std::sqrt(s2);
    prev_y = y;
    if (t >= burn_in) out.y[t - burn_in] = y;
  }
  return out;
}

// Gaussian negative log-likelihood (T/2) ln 2pi + 1/2 sum(ln s2 + y^2/s2).
inline double garch_neg_loglik(const ReturnSeries& s, const GarchParams& p) {
  Vec s2 = sigma2_path(s, p);
  double acc = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) acc += std::log(s2[t]) + s.y[t] * s.y[t] / s2[t];
  return 0.5 * (static_cast<double>(s.size()) * std::log(2.0 * M_PI) + acc);
}

namespace detail {

// Walks the series once, producing the per-observation log-likelihood
// gradient in (omega, a, b). Derivative paths of sigma_t^2, including the
// contribution of the stationary initialization:
//   d/domega: d_1 = 1/(1-a-b),       d_t = 1         + b d_{t-1}
//   d/da:     d_1 = omega/(1-a-b)^2, d_t = y_{t-1}^2 + b d_{t-1}
//   d/db:     d_1 = omega/(1-a-b)^2, d_t = s2_{t-1}  + b d_{t-1}
template <typename F>
inline void garch_score_walk(const ReturnSeries& s, const GarchParams& p, F&& visit) {
  Vec s2 = sigma2_path(s, p);
  const double one = 1.0 / (1.0 - p.a - p.b);
  double dw = one, da = p.omega * one * one, db = da;
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (t > 0) {
      const double y2 = s.y[t - 1] * s.y[t - 1];
      dw = 1.0 + p.b * dw;
      da = y2 + p.b * da;
      db = s2[t - 1] + p.b * db;
    }
    // dlogL_t/dsigma_t^2 = (y_t^2 - s2_t) / (2 s2_t^2)
    const double g = (s.y[t] * s.y[t] - s2[t]) / (2.0 * s2[t] * s2[t]);
    visit(t, g * dw, g * da, g * db);
  }
}

}  // namespace detail

// (dlogL/da, dlogL/db) with the nuisance intercept held fixed.
inline Vec garch_score_primary(const ReturnSeries& s, const GarchParams& p) {
  Vec out(2, 0.0);
  detail::garch_score_walk(s, p, [&](std::size_t, double, double ga, double gb) {
    out[0] += ga;
    out[1] += gb;
  });
  return out;
}

inline Vec garch_score_full(const ReturnSeries& s, const GarchParams& p) {
  Vec out(3, 0.0);
  detail::garch_score_walk(s, p, [&](std::size_t, double gw, double ga, double gb) {
    out[0] += gw;
    out[1] += ga;
    out[2] += gb;
  });
  return out;
}

// Per-observation score rows in (omega, a, b) order, for the outer-product
// information estimator.
inline std::vector<Vec> garch_per_sample_scores(const ReturnSeries& s, const GarchParams& p) {
  std::vector<Vec> rows(s.size(), Vec(3));
  detail::garch_score_walk(s, p, [&](std::size_t t, double gw, double ga, double gb) {
    rows[t][0] = gw;
    rows[t][1] = ga;
    rows[t][2] = gb;
  });
  return rows;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Interior reparameterization: total t = (1-margin)*sig(u) = a+b and
// fraction f = sig(v) = a/(a+b) keep every iterate strictly inside the
// constraint set, so the smooth optimizer needs no projections.
inline std::pair<double, double> ab_from_uv(double u, double v) {
  const double t = (1.0 - kGarchSumMargin) * sigmoid(u);
  const double f = sigmoid(v);
  return {t * f, t * (1.0 - f)};
}

// NLL and its gradient in (u, v) at fixed omega, chain-ruled through the map.
inline std::pair<double, Vec> garch_nll_uv(const ReturnSeries& s, double omega, double u, double v) {
  auto [a, b] = ab_from_uv(u, v);
  GarchParams p{omega, a, b};
  const double val = garch_neg_loglik(s, p);
  Vec sc = garch_score_primary(s, p);  // dlogL/d(a,b)
  const double su = sigmoid(u), f = sigmoid(v);
  const double t = (1.0 - kGarchSumMargin) * su;
  const double dt_du = (1.0 - kGarchSumMargin) * su * (1.0 - su);
  const double df_dv = f * (1.0 - f);
  Vec g(2);
  g[0] = -(sc[0] * dt_du * f + sc[1] * dt_du * (1.0 - f));
  g[1] = -(sc[0] * t * df_dv - sc[1] * t * df_dv);
  return {val, g};
}

}  // namespace detail

struct GarchPrimaryFit {
  double a = 0.0, b = 0.0;
  Mat v_theta_over_n;  // 2x2
  double nll = 0.0;
  int iters = 0;
  bool converged = false;
  bool boundary_solution = false;  // optimum within 1e-3 of the constraint set's edge
};

// Constrained MLE of (a, b) with the variance intercept fixed at an external
// estimate. Quasi-Newton search in the interior reparameterization from a
// spread of starting points, then a short raw-coordinate Newton polish so
// the returned point is stationary in (a, b) itself, not merely in the
// transformed coordinates. V_theta/n comes from the inverse information of
// the negative finite-difference Hessian at the optimum.
inline GarchPrimaryFit garch_fit_primary(const ReturnSeries& s, double omega_hat) {
  if (!(omega_hat > 0.0)) throw InvalidParams("garch_fit_primary: omega_hat must be positive");
  if (s.size() < 20) throw InvalidData("garch_fit_primary: series too short to estimate");
  double ysq = 0.0;
  for (double v : s.y) ysq += v * v;
  if (!(ysq > 0.0)) throw InvalidData("garch_fit_primary: series is identically zero");

  static constexpr std::array<std::array<double, 2>, 3> kStarts{
      {{-1.0, -2.0}, {2.2, -2.8}, {-2.0, 0.0}}};

  GarchPrimaryFit fit;
  OptimResult best;
  bool have = false;
  for (const auto& st : kStarts) {
    OptimOptions opt;
    opt.max_iter = 400;
    opt.grad_tol = 1e-9;
    OptimResult r = minimize_bfgs(
        [&](const Vec& x) { return detail::garch_nll_uv(s, omega_hat, x[0], x[1]); },
        {st[0], st[1]}, opt);
    if (!have || r.f < best.f - 1e-9) {
      best = r;
      have = true;
    }
    fit.iters += r.iters;
  }

  auto [a0, b0] = detail::ab_from_uv(best.x[0], best.x[1]);
  GarchParams p{omega_hat, a0, b0};
  DiffPlan plan;

  // Newton polish on the raw score; constraint-violating or uphill steps are
  // halved away, and any FD failure near the boundary just keeps the
  // quasi-Newton point.
  try {
    double nll_cur = garch_neg_loglik(s, p);
    for (int it = 0; it < 10; ++it) {
      Vec sc = garch_score_primary(s, p);
      if (std::max(std::abs(sc[0]), std::abs(sc[1])) < 1e-7) break;
      Mat h = finite_diff_jacobian(
          [&](const Vec& ab) { return garch_score_primary(s, {omega_hat, ab[0], ab[1]}); },
          {p.a, p.b}, plan);
      Vec delta = mat_vec(inverse_spd(-1.0 * symmetrize(h)), sc);
      double t = 1.0;
      bool moved = false;
      for (int halving = 0; halving < 25 && !moved; ++halving) {
        const double an = p.a + t * delta[0], bn = p.b + t * delta[1];
        if (an >= 0.0 && bn >= 0.0 && an + bn <= 1.0 - kGarchSumMargin) {
          GarchParams pn{omega_hat, an, bn};
          double nn = garch_neg_loglik(s, pn);
          if (std::isfinite(nn) && nn <= nll_cur + 1e-12) {
            p = pn;
            nll_cur = nn;
            moved = true;
          }
        }
        t *= 0.5;
      }
      if (!moved) break;
    }
  } catch (const Error&) {
    // keep the reparameterized optimum
  }

  fit.a = p.a;
  fit.b = p.b;
  fit.nll = garch_neg_loglik(s, p);

  const double edge = 1.0 - kGarchSumMargin;
  fit.boundary_solution = (p.a < 1e-3) || (p.b < 1e-3) || (p.a + p.b > edge - 1e-3);

  Vec sc = garch_score_primary(s, p);
  fit.converged = std::max(std::abs(sc[0]), std::abs(sc[1])) < 1e-6;
  if (!fit.converged && !fit.boundary_solution)
    throw NoConvergence("garch_fit_primary: interior optimum not stationary");

  // V_theta/n = [n * FIM]^{-1} with FIM from the negative FD Hessian. At a
  // boundary solution the difference stencil would leave the feasible region,
  // so the expansion point is nudged inward by one step first.
  GarchParams pf = p;
  {
    const double ha = plan.step_for(p.a), hb = plan.step_for(p.b);
    pf.a = std::max(p.a, ha);
    pf.b = std::max(p.b, hb);
    const double cap = 1.0 - kGarchSumMargin - 2.0 * std::max(ha, hb);
    if (pf.a + pf.b > cap) {
      const double scale = cap / (pf.a + pf.b);
      pf.a *= scale;
      pf.b *= scale;
    }
  }
  Mat fim = fim_from_neg_hessian(
      [&](const Vec& ab) { return -garch_neg_loglik(s, {omega_hat, ab[0], ab[1]}); },
      {pf.a, pf.b}, plan, s.size());
  fit.v_theta_over_n = (1.0 / static_cast<double>(s.size())) * inverse_spd(fim);
  return fit;
}

struct GarchOmegaFit {
  double omega_hat = 0.0;
  double v_omega_over_m = 0.0;
  double a = 0.0, b = 0.0;  // profile values behind omega_hat
  double lrt = 0.0;         // 2 * (restricted NLL - full NLL)
  bool used_restricted = false;
};

// Nuisance-intercept estimate from an independent series: profile ML over
// the full (omega, a, b) triple, guarded by a likelihood-ratio parsimony
// rule. On (near) white noise the full profile likelihood is flat along
// omega/(1-b) = const and an optimizer parks at an arbitrary ridge point, so
// the closed-form restricted model a = b = 0 (omega = mean of y^2) is
// preferred unless the data reject it at roughly the 5% chi-square(2) level.
// The variance of omega_hat is the inverse of the omega-diagonal entry of
// the per-observation information, divided by the series length.
inline GarchOmegaFit garch_fit_omega(const ReturnSeries& s) {
  if (s.size() < 20) throw InvalidData("garch_fit_omega: series too short to estimate");
  const std::size_t m = s.size();
  double vhat = 0.0;
  for (double v : s.y) vhat += v * v;
  vhat /= static_cast<double>(m);
  if (!(vhat > 0.0)) throw InvalidData("garch_fit_omega: series is identically zero");

  GarchOmegaFit out;

  // restricted model: white noise, closed-form MLE
  const double nll_restricted = garch_neg_loglik(s, {vhat, 0.0, 0.0});

  // full model: omega = exp(w) plus the same interior map for (a, b);
  // omega start from variance targeting at each (a+b) start
  static constexpr std::array<std::array<double, 2>, 3> kStarts{
      {{-1.0, -2.0}, {2.2, -2.8}, {-3.0, 0.0}}};
  auto full_obj = [&](const Vec& x) -> std::pair<double, Vec> {
    const double omega = std::exp(x[0]);
    auto [a, b] = detail::ab_from_uv(x[1], x[2]);
    GarchParams p{omega, a, b};
    const double val = garch_neg_loglik(s, p);
    Vec sc = garch_score_full(s, p);
    const double su = detail::sigmoid(x[1]), f = detail::sigmoid(x[2]);
    const double t = (1.0 - kGarchSumMargin) * su;
    const double dt_du = (1.0 - kGarchSumMargin) * su * (1.0 - su);
    const double df_dv = f * (1.0 - f);
    Vec g(3);
    g[0] = -sc[0] * omega;
    g[1] = -(sc[1] * dt_du * f + sc[2] * dt_du * (1.0 - f));
    g[2] = -(sc[1] * t * df_dv - sc[2] * t * df_dv);
    return {val, g};
  };

  bool have = false;
  OptimResult best;
  double best_ab_sum = 0.0;
  for (const auto& st : kStarts) {
    auto [t0, f0] = detail::ab_from_uv(st[0], st[1]);
    const double w0 = std::log(std::max(vhat * (1.0 - (t0 + f0)), 1e-8));
    OptimOptions opt;
    opt.max_iter = 400;
    opt.grad_tol = 1e-8;
    OptimResult r = minimize_bfgs(full_obj, {w0, st[0], st[1]}, opt);
    auto [a, b] = detail::ab_from_uv(r.x[1], r.x[2]);
    // prefer lower NLL; resolve ties toward the less persistent model
    if (!have || r.f < best.f - 1e-6 ||
        (std::abs(r.f - best.f) <= 1e-6 && a + b < best_ab_sum)) {
      best = r;
      best_ab_sum = a + b;
      have = true;
    }
  }

  auto [a_full, b_full] = detail::ab_from_uv(best.x[1], best.x[2]);
  const double omega_full = std::exp(best.x[0]);
  out.lrt = 2.0 * (nll_restricted - best.f);
  if (out.lrt > 6.0) {
    out.omega_hat = omega_full;
    out.a = a_full;
    out.b = b_full;
  } else {
    out.used_restricted = true;
    out.omega_hat = vhat;
    out.a = 0.0;
    out.b = 0.0;
  }

  Mat fim = fim_from_scores(garch_per_sample_scores(s, {out.omega_hat, out.a, out.b}));
  if (!(fim(0, 0) > 0.0)) throw SingularMatrix("garch_fit_omega: degenerate omega information");
  out.v_omega_over_m = (1.0 / fim(0, 0)) / static_cast<double>(m);
  return out;
}

struct GarchPipelineOptions {
  double level = 0.90;
  bool compat_quantile = false;                 // reserved for interval paths
  std::optional<double> omega_override;         // use this omega instead of fitting
  std::optional<double> v_omega_override;       // stipulate Var(omega_hat)/m (0 = exact nuisance)
};

struct GarchPipelineResult {
  CovariancePair pair;
  EllipseSpec adjusted;
  EllipseSpec unadjusted;
  double a_hat = 0.0, b_hat = 0.0;
  double omega_used = 0.0;
  double v_omega_over_m = 0.0;
  GarchOmegaFit omega_fit;   // echo of the independent-series fit (when run)
  bool omega_fit_ran = false;
  bool boundary_solution = false;
};

// End-to-end two-series adjustment: intercept (and its variance) from the
// independent series, primary fit on the main series, cross-derivative of
// the primary score in the intercept by central differences, sensitivity
// solve, covariance widening, and the two confidence ellipses at (a_hat,
// b_hat). Overrides let a caller stipulate the intercept error instead of
// estimating it, which is how the relative-error case studies are defined.
inline GarchPipelineResult garch_adjusted_pipeline(const ReturnSeries& y_primary,
                                                   const ReturnSeries& y_nuisance,
                                                   const GarchPipelineOptions& opts = {}) {
  GarchPipelineResult res;

  double omega_hat, v_omega_over_m;
  if (opts.omega_override && opts.v_omega_override) {
    omega_hat = *opts.omega_override;
    v_omega_over_m = *opts.v_omega_override;
  } else {
    res.omega_fit = garch_fit_omega(y_nuisance);
    res.omega_fit_ran = true;
    omega_hat = opts.omega_override ? *opts.omega_override : res.omega_fit.omega_hat;
    v_omega_over_m = opts.v_omega_override ? *opts.v_omega_override : res.omega_fit.v_omega_over_m;
  }
  if (v_omega_over_m < 0.0) throw InvalidParams("garch_adjusted_pipeline: negative omega variance");

  GarchPrimaryFit fit = garch_fit_primary(y_primary, omega_hat);
  res.a_hat = fit.a;
  res.b_hat = fit.b;
  res.omega_used = omega_hat;
  res.v_omega_over_m = v_omega_over_m;
  res.boundary_solution = fit.boundary_solution;

  DiffPlan plan;
  Mat h_tt = finite_diff_jacobian(
      [&](const Vec& ab) { return garch_score_primary(y_primary, {omega_hat, ab[0], ab[1]}); },
      {fit.a, fit.b}, plan);
  Mat h_tw = finite_diff_jacobian(
      [&](const Vec& w) { return garch_score_primary(y_primary, {w[0], fit.a, fit.b}); },
      {omega_hat}, plan);

  SensitivityMatrix d1 = sensitivity_d1(symmetrize(h_tt), h_tw);
  Mat v_alpha(1, 1);
  v_alpha(0, 0) = v_omega_over_m;
  res.pair = adjusted_covariance(fit.v_theta_over_n, d1, v_alpha, y_primary.size(), y_nuisance.size());

  Vec center{fit.a, fit.b};
  res.adjusted = confidence_ellipse(center, res.pair.adjusted, opts.level);
  res.unadjusted = confidence_ellipse(center, res.pair.unadjusted, opts.level);
  return res;
}

}  // namespace nadjust
