#pragma once

#include <vector>

#include "nadjust/diff.hpp"
#include "nadjust/mat.hpp"

namespace nadjust {

// Average outer product of per-sample scores, (1/n) sum s_i s_i'. Symmetric
// PSD by construction, which is why it is the default information estimator;
// the negative-Hessian form below is the cross-check.
inline Mat fim_from_scores(const std::vector<Vec>& scores) {
  if (scores.size() < 2) throw InvalidData("fim_from_scores: need at least 2 score samples");
  const std::size_t d = scores.front().size();
  Mat f(d, d);
  for (const Vec& s : scores) {
    if (s.size() != d) throw DimensionMismatch("fim_from_scores: inconsistent score dimension");
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) f(i, j) += s[i] * s[j];
  }
  const double inv_n = 1.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      f(i, j) *= inv_n;
      f(j, i) = f(i, j);
    }
  return f;
}

// -(1/n) x Hessian of the total log-likelihood, symmetrized. Equals the
// outer-product estimator in expectation (information equality).
inline Mat fim_from_neg_hessian(const std::function<double(const Vec&)>& loglik, const Vec& x,
                                const DiffPlan& plan, std::size_t n) {
  if (n == 0) throw InvalidParams("fim_from_neg_hessian: n must be positive");
  Mat h = finite_diff_hessian(loglik, x, plan);
  return symmetrize((-1.0 / static_cast<double>(n)) * h);
}

}  // namespace nadjust
