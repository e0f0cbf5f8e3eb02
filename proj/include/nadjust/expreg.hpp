#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nadjust/adjust.hpp"
#include "nadjust/fim.hpp"
#include "nadjust/mat.hpp"
#include "nadjust/rng.hpp"

namespace nadjust {

// Exponential regression y ~ Exponential(rate lambda), lambda = exp(b0 +
// b1*x1 + b2*x2). The primary block is (b0, b2); b1 is the nuisance
// coefficient estimated from an independent dataset.
struct ExpRegParams {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;

  Vec as_vec() const { return {b0, b1, b2}; }
  static ExpRegParams from_vec(const Vec& v) { return {v[0], v[1], v[2]}; }
};

struct ExpRegData {
  Vec x1, x2, y;

  std::size_t n() const { return y.size(); }
  void validate() const {
    if (x1.size() != y.size() || x2.size() != y.size())
      throw DimensionMismatch("ExpRegData: column lengths differ");
    for (double v : y)
      if (!(v > 0.0)) throw InvalidData("ExpRegData: responses must be positive");
  }
};

// Covariate generator: x1 = z1, x2 = rho*z1 + sqrt(1-rho^2)*z2 with z i.i.d.
// standard normal. A nonzero default correlation keeps the primary/nuisance
// information coupling away from zero — with independent covariates the
// cross-information vanishes and plugging in a noisy nuisance estimate would
// cost nothing, which is exactly the failure mode this library quantifies.
struct CovariateLaw {
  double rho = 0.2;
};

inline ExpRegData expreg_simulate(const ExpRegParams& p, std::size_t n, const CovariateLaw& law,
                                  RngStream& rng) {
  if (n == 0) throw InvalidParams("expreg_simulate: n must be positive");
  if (!(law.rho > -1.0 && law.rho < 1.0)) throw InvalidParams("expreg_simulate: |rho| must be < 1");
  ExpRegData d;
  d.x1.resize(n);
  d.x2.resize(n);
  d.y.resize(n);
  const double mix = std::sqrt(1.0 - law.rho * law.rho);
  for (std::size_t i = 0; i < n; ++i) {
    double z1 = rng.normal(), z2 = rng.normal();
    d.x1[i] = z1;
    d.x2[i] = law.rho * z1 + mix * z2;
    double lambda = std::exp(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i]);
    d.y[i] = rng.exponential(lambda);
  }
  return d;
}

inline double expreg_loglik(const ExpRegParams& p, const ExpRegData& d) {
  double ll = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) {
    double eta = p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i];
    ll += eta - std::exp(eta) * d.y[i];
  }
  return ll;
}

enum class ParamSubset { primary, nuisance, all };

namespace detail {
inline std::vector<std::size_t> subset_indices(ParamSubset which) {
  switch (which) {
    case ParamSubset::primary: return {0, 2};
    case ParamSubset::nuisance: return {1};
    default: return {0, 1, 2};
  }
}

inline double covariate(const ExpRegData& d, std::size_t coord, std::size_t i) {
  return coord == 0 ? 1.0 : (coord == 1 ? d.x1[i] : d.x2[i]);
}
}  // namespace detail

// dlogL/db_j = sum_i x_ji (1 - lambda_i y_i), with x_0i = 1.
inline Vec expreg_score(const ExpRegParams& p, const ExpRegData& d,
                        ParamSubset which = ParamSubset::all) {
  auto idx = detail::subset_indices(which);
  Vec s(idx.size(), 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    double lam_y = std::exp(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i]) * d.y[i];
    double w = 1.0 - lam_y;
    for (std::size_t k = 0; k < idx.size(); ++k) s[k] += detail::covariate(d, idx[k], i) * w;
  }
  return s;
}

inline std::vector<Vec> expreg_per_sample_scores(const ExpRegParams& p, const ExpRegData& d,
                                                 const std::vector<std::size_t>& coords) {
  std::vector<Vec> out(d.n(), Vec(coords.size()));
  for (std::size_t i = 0; i < d.n(); ++i) {
    double w = 1.0 - std::exp(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i]) * d.y[i];
    for (std::size_t k = 0; k < coords.size(); ++k) out[i][k] = detail::covariate(d, coords[k], i) * w;
  }
  return out;
}

// Analytic Hessian block H_jk = d^2 logL / db_j db_k = -sum_i x_ji x_ki lambda_i y_i.
inline Mat expreg_hessian(const ExpRegParams& p, const ExpRegData& d,
                          const std::vector<std::size_t>& row_coords,
                          const std::vector<std::size_t>& col_coords) {
  Mat h(row_coords.size(), col_coords.size());
  for (std::size_t i = 0; i < d.n(); ++i) {
    double lam_y = std::exp(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i]) * d.y[i];
    for (std::size_t r = 0; r < row_coords.size(); ++r)
      for (std::size_t c = 0; c < col_coords.size(); ++c)
        h(r, c) -= detail::covariate(d, row_coords[r], i) * detail::covariate(d, col_coords[c], i) * lam_y;
  }
  return h;
}

struct ExpRegFit {
  ExpRegParams params;
  int iters = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

// Newton iteration on the free coordinate block with step-halving, starting
// from the values in `init` (whose fixed coordinates stay pinned). The
// log-likelihood is smooth and at most 3-dimensional, so plain Newton with a
// generous cap is the right tool.
inline ExpRegFit expreg_fit(const ExpRegData& d, const std::vector<std::size_t>& free_coords,
                            const ExpRegParams& init) {
  d.validate();
  if (d.n() == 0) throw InvalidData("expreg_fit: empty dataset");
  ExpRegFit fit;
  fit.params = init;
  if (free_coords.empty()) {
    fit.converged = true;
    return fit;
  }

  Vec b = init.as_vec();
  auto score_free = [&](const Vec& full) {
    ExpRegParams p = ExpRegParams::from_vec(full);
    Vec s(free_coords.size(), 0.0);
    for (std::size_t i = 0; i < d.n(); ++i) {
      double w = 1.0 - std::exp(p.b0 + p.b1 * d.x1[i] + p.b2 * d.x2[i]) * d.y[i];
      for (std::size_t k = 0; k < free_coords.size(); ++k)
        s[k] += detail::covariate(d, free_coords[k], i) * w;
    }
    return s;
  };
  auto inf_norm = [](const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  constexpr double tol = 1e-8;
  Vec s = score_free(b);
  double ll = expreg_loglik(ExpRegParams::from_vec(b), d);
  for (fit.iters = 0; fit.iters < 100; ++fit.iters) {
    fit.grad_norm = inf_norm(s);
    if (fit.grad_norm < tol) {
      fit.converged = true;
      break;
    }
    Mat h = expreg_hessian(ExpRegParams::from_vec(b), d, free_coords, free_coords);
    // Newton step solves (-H) delta = s, a SPD system at any point here
    // because -H = X' diag(lambda*y) X with positive weights.
    Vec delta = mat_vec(inverse_spd(-1.0 * h), s);
    double t = 1.0;
    Vec bn = b;
    for (int halving = 0; halving < 40; ++halving) {
      for (std::size_t k = 0; k < free_coords.size(); ++k)
        bn[free_coords[k]] = b[free_coords[k]] + t * delta[k];
      double lln = expreg_loglik(ExpRegParams::from_vec(bn), d);
      // Accept within rounding slack: near the optimum the true gain sits
      // below the resolution of ll, and the undamped step is still the
      // quadratically convergent one.
      if (std::isfinite(lln) && lln >= ll - 1e-9 * (1.0 + std::abs(ll))) {
        ll = lln;
        break;
      }
      t *= 0.5;
    }
    b = bn;
    s = score_free(b);
  }
  fit.grad_norm = inf_norm(s);
  if (fit.grad_norm < tol) fit.converged = true;
  fit.params = ExpRegParams::from_vec(b);
  return fit;
}

// One scenario's primary-parameter estimate and covariance; scenario 2 also
// carries the full adjustment breakdown.
struct ExpRegScenarios {
  Vec theta_plugin;      // (b0, b2) fit with the external nuisance value
  Mat cov_plugin;        // scenario 1: inverse primary FIM / n, no adjustment
  CovariancePair pair;   // scenario 2: the plugin fit with the nuisance-noise term added
  Vec theta_joint;       // scenario 3: joint fit on the primary dataset
  Mat cov_joint;         // primary block of the full inverse FIM / n
  Vec theta_pooled;      // scenario 4: joint fit on both datasets pooled
  Mat cov_pooled;
  double alpha_hat = 0.0;
  double v_alpha_over_m = 0.0;
};

namespace detail {
inline Mat primary_block(const Mat& full3) {
  Mat b(2, 2);
  const std::size_t map[2] = {0, 2};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) b(i, j) = full3(map[i], map[j]);
  return b;
}
}  // namespace detail

// The four estimation strategies compared by the coverage study:
//   1. plug in the nuisance estimate from the independent dataset, report the
//      naive primary covariance;
//   2. same fit, covariance widened by the nuisance-propagation term;
//   3. ignore the independent dataset, fit everything jointly on the primary
//      data;
//   4. pool both datasets and fit jointly.
// The nuisance variance for scenario 2 is the inverse of the nuisance
// diagonal entry of the independent dataset's per-sample information, divided
// by that dataset's size.
inline ExpRegScenarios expreg_scenarios(const ExpRegData& data_a, const ExpRegData& data_b) {
  ExpRegScenarios out;
  const std::size_t n = data_a.n(), m = data_b.n();
  const std::vector<std::size_t> all{0, 1, 2}, prim{0, 2}, nuis{1};

  // independent dataset: joint MLE, then the nuisance entry of its information
  ExpRegFit fit_b = expreg_fit(data_b, all, {});
  if (!fit_b.converged) throw NoConvergence("expreg_scenarios: nuisance-dataset fit did not converge");
  out.alpha_hat = fit_b.params.b1;
  Mat fim_b_alpha = fim_from_scores(expreg_per_sample_scores(fit_b.params, data_b, nuis));
  out.v_alpha_over_m = 1.0 / (fim_b_alpha(0, 0) * static_cast<double>(m));

  // scenario 1: primary fit with the nuisance pinned
  ExpRegParams start;
  start.b1 = out.alpha_hat;
  ExpRegFit fit1 = expreg_fit(data_a, prim, start);
  if (!fit1.converged) throw NoConvergence("expreg_scenarios: plugin fit did not converge");
  out.theta_plugin = {fit1.params.b0, fit1.params.b2};
  Mat fim1 = fim_from_scores(expreg_per_sample_scores(fit1.params, data_a, prim));
  out.cov_plugin = (1.0 / static_cast<double>(n)) * inverse_spd(fim1);

  // scenario 2: nuisance-propagation adjustment at the same fit point
  Mat h_tt = expreg_hessian(fit1.params, data_a, prim, prim);
  Mat h_ta = expreg_hessian(fit1.params, data_a, prim, nuis);
  SensitivityMatrix d1 = sensitivity_d1(h_tt, h_ta);
  Mat v_alpha(1, 1);
  v_alpha(0, 0) = out.v_alpha_over_m;
  out.pair = adjusted_covariance(out.cov_plugin, d1, v_alpha, n, m);

  // scenario 3: joint fit on the primary data, primary block of the inverse
  ExpRegFit fit3 = expreg_fit(data_a, all, {});
  if (!fit3.converged) throw NoConvergence("expreg_scenarios: joint fit did not converge");
  out.theta_joint = {fit3.params.b0, fit3.params.b2};
  Mat fim3 = fim_from_scores(expreg_per_sample_scores(fit3.params, data_a, all));
  out.cov_joint = (1.0 / static_cast<double>(n)) * detail::primary_block(inverse_spd(fim3));

  // scenario 4: pooled joint fit
  ExpRegData pooled;
  pooled.x1 = data_a.x1;
  pooled.x2 = data_a.x2;
  pooled.y = data_a.y;
  pooled.x1.insert(pooled.x1.end(), data_b.x1.begin(), data_b.x1.end());
  pooled.x2.insert(pooled.x2.end(), data_b.x2.begin(), data_b.x2.end());
  pooled.y.insert(pooled.y.end(), data_b.y.begin(), data_b.y.end());
  ExpRegFit fit4 = expreg_fit(pooled, all, {});
  if (!fit4.converged) throw NoConvergence("expreg_scenarios: pooled fit did not converge");
  out.theta_pooled = {fit4.params.b0, fit4.params.b2};
  Mat fim4 = fim_from_scores(expreg_per_sample_scores(fit4.params, pooled, all));
  out.cov_pooled = (1.0 / static_cast<double>(n + m)) * detail::primary_block(inverse_spd(fim4));

  return out;
}

}  // namespace nadjust
