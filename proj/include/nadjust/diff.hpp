#pragma once

#include <cmath>
#include <functional>

#include "nadjust/errors.hpp"
#include "nadjust/mat.hpp"

namespace nadjust {

// Central-difference configuration. Steps are relative by default
// (h_i = base_step * max(1, |x_i|)); absolute mode uses base_step directly.
struct DiffPlan {
  enum class StepMode { absolute, relative };
  StepMode step_mode = StepMode::relative;
  double base_step = 1e-5;

  double step_for(double xi) const {
    if (base_step <= 0.0) throw InvalidParams("DiffPlan: base_step must be positive");
    return step_mode == StepMode::relative ? base_step * std::max(1.0, std::abs(xi)) : base_step;
  }
};

namespace detail {
inline double checked_eval(const std::function<double(const Vec&)>& f, const Vec& x) {
  double v = f(x);
  if (!std::isfinite(v)) throw NonFiniteEvaluation("finite difference: function returned non-finite value");
  return v;
}
}  // namespace detail

inline Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                                const DiffPlan& plan = {}) {
  Vec g(x.size());
  Vec xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = plan.step_for(x[i]);
    xp[i] = x[i] + h;
    const double fp = detail::checked_eval(f, xp);
    xp[i] = x[i] - h;
    const double fm = detail::checked_eval(f, xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Column j holds the central difference of g along coordinate j, i.e. the
// Jacobian with output index down the rows. This orientation is what both
// cross-derivative uses need (score w.r.t. nuisance, weight-gradient w.r.t.
// bias).
inline Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& g, const Vec& x,
                                const DiffPlan& plan = {}) {
  Vec xp = x;
  Mat jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = plan.step_for(x[j]);
    xp[j] = x[j] + h;
    Vec gp = g(xp);
    xp[j] = x[j] - h;
    Vec gm = g(xp);
    xp[j] = x[j];
    if (gp.size() != gm.size()) throw DimensionMismatch("finite_diff_jacobian: inconsistent output size");
    if (jac.rows == 0) jac = Mat(gp.size(), x.size());
    if (gp.size() != jac.rows) throw DimensionMismatch("finite_diff_jacobian: inconsistent output size");
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (!std::isfinite(gp[i]) || !std::isfinite(gm[i]))
        throw NonFiniteEvaluation("finite_diff_jacobian: function returned non-finite value");
      jac(i, j) = (gp[i] - gm[i]) / (2.0 * h);
    }
  }
  return jac;
}

// Central second differences of a scalar function; returns the symmetrized
// Hessian. Only used through fim_from_neg_hessian, where FD noise is checked
// against the outer-product estimator.
inline Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x,
                               const DiffPlan& plan = {}) {
  const std::size_t d = x.size();
  Mat h(d, d);
  const double f0 = detail::checked_eval(f, x);
  Vec xp = x;
  for (std::size_t i = 0; i < d; ++i) {
    const double hi = plan.step_for(x[i]);
    xp[i] = x[i] + hi;
    const double fp = detail::checked_eval(f, xp);
    xp[i] = x[i] - hi;
    const double fm = detail::checked_eval(f, xp);
    xp[i] = x[i];
    h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (std::size_t j = i + 1; j < d; ++j) {
      const double hj = plan.step_for(x[j]);
      xp[i] = x[i] + hi;
      xp[j] = x[j] + hj;
      const double fpp = detail::checked_eval(f, xp);
      xp[j] = x[j] - hj;
      const double fpm = detail::checked_eval(f, xp);
      xp[i] = x[i] - hi;
      const double fmm = detail::checked_eval(f, xp);
      xp[j] = x[j] + hj;
      const double fmp = detail::checked_eval(f, xp);
      xp[i] = x[i];
      xp[j] = x[j];
      h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  }
  return h;
}

}  // namespace nadjust
