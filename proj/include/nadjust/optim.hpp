#pragma once

#include <cmath>
#include <functional>

#include "nadjust/mat.hpp"

namespace nadjust {

struct OptimResult {
  Vec x;
  double f = 0.0;
  Vec grad;
  int iters = 0;
  bool converged = false;
};

struct OptimOptions {
  int max_iter = 300;
  double grad_tol = 1e-8;  // infinity norm of the gradient
  double min_step = 1e-14;
};

// Quasi-Newton (BFGS) minimizer with Armijo backtracking, for the handful of
// low-dimensional smooth objectives in this library (reparameterized
// likelihoods of dimension 2-3, bias refits). fg must return the objective
// value and gradient at x.
inline OptimResult minimize_bfgs(const std::function<std::pair<double, Vec>(const Vec&)>& fg,
                                 const Vec& x0, const OptimOptions& opt = {}) {
  const std::size_t d = x0.size();
  OptimResult res;
  res.x = x0;
  Mat h = Mat::identity(d);  // inverse-Hessian approximation

  auto [f, g] = fg(res.x);
  res.f = f;
  res.grad = g;

  for (res.iters = 0; res.iters < opt.max_iter; ++res.iters) {
    double gmax = 0.0;
    for (double v : res.grad) gmax = std::max(gmax, std::abs(v));
    if (gmax < opt.grad_tol) {
      res.converged = true;
      return res;
    }

    Vec p = mat_vec(h, res.grad);
    for (double& v : p) v = -v;
    double slope = dot(res.grad, p);
    if (!(slope < 0.0)) {  // approximation lost descent; reset
      h = Mat::identity(d);
      for (std::size_t i = 0; i < d; ++i) p[i] = -res.grad[i];
      slope = dot(res.grad, p);
    }

    double t = 1.0;
    Vec xn(d);
    double fn = 0.0;
    Vec gn;
    bool step_ok = false;
    while (t >= opt.min_step) {
      for (std::size_t i = 0; i < d; ++i) xn[i] = res.x[i] + t * p[i];
      auto [fv, gv] = fg(xn);
      if (std::isfinite(fv) && fv <= res.f + 1e-4 * t * slope) {
        fn = fv;
        gn = std::move(gv);
        step_ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!step_ok) return res;  // stuck: caller inspects converged flag

    Vec s(d), y(d);
    for (std::size_t i = 0; i < d; ++i) {
      s[i] = xn[i] - res.x[i];
      y[i] = gn[i] - res.grad[i];
    }
    res.x = std::move(xn);
    res.f = fn;
    res.grad = std::move(gn);

    double sy = dot(s, y);
    double snorm = std::sqrt(dot(s, s)), ynorm = std::sqrt(dot(y, y));
    if (sy > 1e-12 * snorm * ynorm) {  // curvature condition; else skip update
      const double rho = 1.0 / sy;
      Vec hy = mat_vec(h, y);
      double yhy = dot(y, hy);
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          h(i, j) += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
    }
  }
  return res;
}

}  // namespace nadjust
