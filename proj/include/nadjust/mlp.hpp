#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "nadjust/adjust.hpp"
#include "nadjust/diff.hpp"
#include "nadjust/fim.hpp"
#include "nadjust/rng.hpp"

namespace nadjust {

enum class Activation { sigmoid, relu, linear };

// Feed-forward classifier description. Weights are the primary parameters;
// biases are the nuisance block. By convention the first weight matrix (the
// one touching the input) is excluded from the primary scope, which keeps
// the information matrix at a tractable size for inversion; a flag restores
// it for callers that want the full set.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::sigmoid;
  bool include_input_layer_in_primary = false;

  void validate() const {
    if (layer_sizes.size() < 3)
      throw InvalidParams("MlpSpec: need at least one hidden layer");
    for (std::size_t s : layer_sizes)
      if (s < 1) throw InvalidParams("MlpSpec: all layer sizes must be >= 1");
  }

  std::size_t weight_layer_count() const { return layer_sizes.size() - 1; }
  std::size_t output_dim() const { return layer_sizes.back(); }

  // first weight layer counted as primary
  std::size_t scope_start() const { return include_input_layer_in_primary ? 0 : 1; }

  std::size_t in_scope_weight_count() const {
    std::size_t c = 0;
    for (std::size_t k = scope_start(); k + 1 < layer_sizes.size(); ++k)
      c += layer_sizes[k] * layer_sizes[k + 1];
    return c;
  }

  std::size_t bias_count() const {
    std::size_t c = 0;
    for (std::size_t k = 1; k < layer_sizes.size(); ++k) c += layer_sizes[k];
    return c;
  }
};

struct NetParams {
  std::vector<Mat> weights;  // weights[k]: layer_sizes[k] x layer_sizes[k+1]
  std::vector<Vec> biases;   // biases[k]: layer_sizes[k+1]

  void validate(const MlpSpec& spec) const {
    spec.validate();
    const std::size_t K = spec.weight_layer_count();
    if (weights.size() != K || biases.size() != K)
      throw DimensionMismatch("NetParams: layer count does not match spec");
    for (std::size_t k = 0; k < K; ++k) {
      if (weights[k].rows != spec.layer_sizes[k] || weights[k].cols != spec.layer_sizes[k + 1])
        throw DimensionMismatch("NetParams: weight shape does not match spec");
      if (biases[k].size() != spec.layer_sizes[k + 1])
        throw DimensionMismatch("NetParams: bias length does not match spec");
      if (!is_finite(weights[k])) throw NonFiniteEvaluation("NetParams: non-finite weight");
      for (double b : biases[k])
        if (!std::isfinite(b)) throw NonFiniteEvaluation("NetParams: non-finite bias");
    }
  }
};

// Classification samples with one-hot targets. `labels` mirrors argmax(y)
// and is kept explicit so stratified operations need not re-derive it.
struct Dataset {
  std::vector<Vec> x;
  std::vector<Vec> y;
  std::vector<int> labels;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.size() != y.size()) throw DimensionMismatch("Dataset: x/y size mismatch");
    if (!labels.empty() && labels.size() != x.size())
      throw DimensionMismatch("Dataset: labels size mismatch");
  }

  int label(std::size_t i) const {
    if (!labels.empty()) return labels[i];
    return static_cast<int>(std::max_element(y[i].begin(), y[i].end()) - y[i].begin());
  }
};

inline double activate(Activation act, double v) {
  switch (act) {
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::linear: return v;
  }
  throw InvalidParams("activate: unknown activation");
}

// derivative expressed through the activated value (valid for all three)
inline double activation_slope(Activation act, double a) {
  switch (act) {
    case Activation::sigmoid: return a * (1.0 - a);
    case Activation::relu: return a > 0.0 ? 1.0 : 0.0;
    case Activation::linear: return 1.0;
  }
  throw InvalidParams("activation_slope: unknown activation");
}

// Scaled Xavier-uniform weights, zero biases. The default gain of 4 keeps
// pre-activations large enough that deep sigmoid stacks do not start in the
// vanishing-gradient regime; pass gain 1 for the classical initialization.
inline NetParams mlp_init(const MlpSpec& spec, std::uint64_t seed, double gain = 4.0) {
  spec.validate();
  RngStream rng(seed, 0x696e6974ULL);  // distinct stream per purpose
  NetParams p;
  for (std::size_t k = 0; k + 1 < spec.layer_sizes.size(); ++k) {
    const std::size_t fan_in = spec.layer_sizes[k], fan_out = spec.layer_sizes[k + 1];
    const double lim = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat w(fan_in, fan_out);
    for (double& v : w.a) v = lim * (2.0 * rng.uniform() - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

struct ForwardCache {
  std::vector<Vec> acts;  // acts[0] = input, acts.back() = output
};

inline Vec mlp_forward(const MlpSpec& spec, const NetParams& p, const Vec& x,
                       ForwardCache* cache = nullptr) {
  if (x.size() != spec.layer_sizes[0])
    throw DimensionMismatch("mlp_forward: input length does not match spec");
  Vec cur = x;
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(cur);
  }
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    const Mat& w = p.weights[k];
    Vec next(w.cols);
    for (std::size_t j = 0; j < w.cols; ++j) {
      double s = p.biases[k][j];
      for (std::size_t i = 0; i < w.rows; ++i) s += cur[i] * w(i, j);
      next[j] = activate(spec.activation, s);
    }
    cur = std::move(next);
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

namespace detail {

// One backward pass for a single sample given its forward cache. delta[k] is
// the gradient of the per-sample loss (squared error summed over outputs)
// with respect to the pre-activation of layer k+1.
inline std::vector<Vec> mlp_sample_deltas(const MlpSpec& spec, const NetParams& p,
                                          const ForwardCache& c, const Vec& target) {
  const std::size_t K = p.weights.size();
  const Vec& out = c.acts.back();
  if (target.size() != out.size())
    throw DimensionMismatch("mlp: target length does not match output layer");
  std::vector<Vec> deltas(K);
  Vec d(out.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    d[j] = 2.0 * (out[j] - target[j]) * activation_slope(spec.activation, out[j]);
  deltas[K - 1] = d;
  for (std::size_t k = K - 1; k-- > 0;) {
    const Mat& w = p.weights[k + 1];
    const Vec& a = c.acts[k + 1];
    Vec dk(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < w.cols; ++j) s += w(i, j) * deltas[k + 1][j];
      dk[i] = s * activation_slope(spec.activation, a[i]);
    }
    deltas[k] = std::move(dk);
  }
  return deltas;
}

}  // namespace detail

struct BackpropResult {
  double loss = 0.0;              // mean over samples of the summed squared error
  std::vector<Mat> weight_grads;  // gradient of that mean loss
  std::vector<Vec> bias_grads;
};

// Mean loss and its gradient over the dataset (or an index subset).
// Optionally collects the per-sample gradient rows of the in-scope weights,
// which are the score vectors feeding the outer-product information matrix.
inline BackpropResult mlp_backprop(const MlpSpec& spec, const NetParams& p, const Dataset& data,
                                   const std::vector<std::size_t>* subset = nullptr,
                                   std::vector<Vec>* score_rows = nullptr) {
  data.validate();
  const std::size_t n = subset ? subset->size() : data.size();
  if (n == 0) throw InvalidData("mlp_backprop: empty sample");
  const std::size_t K = p.weights.size();
  BackpropResult r;
  r.weight_grads.reserve(K);
  r.bias_grads.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    r.weight_grads.emplace_back(p.weights[k].rows, p.weights[k].cols);
    r.bias_grads.emplace_back(p.weights[k].cols, 0.0);
  }
  if (score_rows) {
    score_rows->clear();
    score_rows->reserve(n);
  }
  ForwardCache cache;
  for (std::size_t ii = 0; ii < n; ++ii) {
    const std::size_t i = subset ? (*subset)[ii] : ii;
    const Vec out = mlp_forward(spec, p, data.x[i], &cache);
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = out[j] - data.y[i][j];
      r.loss += d * d;
    }
    std::vector<Vec> deltas = detail::mlp_sample_deltas(spec, p, cache, data.y[i]);
    for (std::size_t k = 0; k < K; ++k) {
      Mat& gw = r.weight_grads[k];
      const Vec& a = cache.acts[k];
      const Vec& d = deltas[k];
      for (std::size_t r0 = 0; r0 < gw.rows; ++r0)
        for (std::size_t c0 = 0; c0 < gw.cols; ++c0) gw(r0, c0) += a[r0] * d[c0];
      for (std::size_t c0 = 0; c0 < d.size(); ++c0) r.bias_grads[k][c0] += d[c0];
    }
    if (score_rows) {
      Vec row;
      row.reserve(spec.in_scope_weight_count());
      for (std::size_t k = spec.scope_start(); k < K; ++k) {
        const Vec& a = cache.acts[k];
        const Vec& d = deltas[k];
        for (double av : a)
          for (double dv : d) row.push_back(av * dv);
      }
      score_rows->push_back(std::move(row));
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  r.loss *= inv_n;
  for (std::size_t k = 0; k < K; ++k) {
    for (double& v : r.weight_grads[k].a) v *= inv_n;
    for (double& v : r.bias_grads[k]) v *= inv_n;
  }
  return r;
}

inline double mlp_loss(const MlpSpec& spec, const NetParams& p, const Dataset& data) {
  data.validate();
  if (data.size() == 0) throw InvalidData("mlp_loss: empty sample");
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vec out = mlp_forward(spec, p, data.x[i]);
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = out[j] - data.y[i][j];
      loss += d * d;
    }
  }
  return loss / static_cast<double>(data.size());
}

inline double mlp_accuracy(const MlpSpec& spec, const NetParams& p, const Dataset& data) {
  if (data.size() == 0) throw InvalidData("mlp_accuracy: empty sample");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vec out = mlp_forward(spec, p, data.x[i]);
    const auto arg = std::max_element(out.begin(), out.end()) - out.begin();
    if (static_cast<int>(arg) == data.label(i)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

struct TrainHyper {
  double lr = 1.0;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  bool train_biases = false;  // biases stay at their initial value by default
};

struct TrainResult {
  NetParams params;
  Vec loss_trace;  // full-data mean loss after each epoch
};

// Mini-batch gradient descent on the mean squared error. Biases are frozen
// unless asked for: the bias-uncertainty machinery downstream quantifies the
// cost of that zero assignment, so the default training protocol leaves them
// untouched.
inline TrainResult mlp_train(const MlpSpec& spec, NetParams params, const Dataset& data,
                             const TrainHyper& hyper) {
  params.validate(spec);
  data.validate();
  if (data.size() == 0) throw InvalidData("mlp_train: empty training set");
  if (!(hyper.lr > 0.0) || hyper.epochs == 0 || hyper.batch == 0)
    throw InvalidParams("mlp_train: lr, epochs and batch must be positive");
  RngStream shuffle_rng(hyper.seed, 0x73687566ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult res;
  res.loss_trace.reserve(hyper.epochs);
  for (std::size_t ep = 0; ep < hyper.epochs; ++ep) {
    shuffle_rng.shuffle(order);
    for (std::size_t s = 0; s < order.size(); s += hyper.batch) {
      const std::size_t e = std::min(s + hyper.batch, order.size());
      std::vector<std::size_t> idx(order.begin() + s, order.begin() + e);
      BackpropResult g = mlp_backprop(spec, params, data, &idx);
      for (std::size_t k = 0; k < params.weights.size(); ++k) {
        for (std::size_t t = 0; t < params.weights[k].a.size(); ++t)
          params.weights[k].a[t] -= hyper.lr * g.weight_grads[k].a[t];
        if (hyper.train_biases)
          for (std::size_t t = 0; t < params.biases[k].size(); ++t)
            params.biases[k][t] -= hyper.lr * g.bias_grads[k][t];
      }
    }
    const double l = mlp_loss(spec, params, data);
    if (!std::isfinite(l)) throw DivergenceDetected("mlp_train: loss became non-finite");
    res.loss_trace.push_back(l);
  }
  res.params = std::move(params);
  return res;
}

// Per-sample normalized class probabilities averaged over the dataset. Each
// sample's raw outputs are rescaled to sum to one, so the average is itself
// a probability vector.
inline Vec class_probs_mean(const MlpSpec& spec, const NetParams& p, const Dataset& data) {
  if (data.size() == 0) throw InvalidData("class_probs_mean: empty sample");
  Vec mu(spec.output_dim(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vec out = mlp_forward(spec, p, data.x[i]);
    double s = 0.0;
    for (double v : out) s += v;
    if (!(s > 0.0)) throw NonFiniteEvaluation("class_probs_mean: non-positive output sum");
    for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += out[j] / s;
  }
  for (double& v : mu) v /= static_cast<double>(data.size());
  return mu;
}

// Outer-product information matrix of the in-scope weights: mean of
// per-sample loss-gradient outer products over the dataset.
inline Mat weight_fim(const MlpSpec& spec, const NetParams& p, const Dataset& data) {
  std::vector<Vec> rows;
  mlp_backprop(spec, p, data, nullptr, &rows);
  return fim_from_scores(rows);
}

// Information matrices of trained sigmoid nets are routinely near-singular
// (saturated units contribute almost-zero score directions), far beyond
// what the generic solve jitter absorbs, so analysis paths stabilize with a
// ridge proportional to the dominant eigenvalue before inverting.
inline Mat fim_with_ridge(const Mat& fim, double rel = 1e-3) {
  if (fim.rows != fim.cols) throw DimensionMismatch("fim_with_ridge: square matrix required");
  const double lam = power_max_eig(fim);
  Mat out = fim;
  for (std::size_t i = 0; i < out.rows; ++i) out(i, i) += rel * lam;
  return out;
}

namespace detail {

inline Vec flat_biases(const NetParams& p) {
  Vec out;
  for (const Vec& b : p.biases) out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline void set_biases_from_flat(NetParams& p, const Vec& flat) {
  std::size_t off = 0;
  for (Vec& b : p.biases) {
    for (double& v : b) v = flat[off++];
  }
  if (off != flat.size()) throw DimensionMismatch("set_biases_from_flat: length mismatch");
}

inline Vec flat_scope_weight_grads(const MlpSpec& spec, const std::vector<Mat>& grads) {
  Vec out;
  out.reserve(spec.in_scope_weight_count());
  for (std::size_t k = spec.scope_start(); k < grads.size(); ++k)
    out.insert(out.end(), grads[k].a.begin(), grads[k].a.end());
  return out;
}

inline void add_to_scope_weights(const MlpSpec& spec, NetParams& p, const Vec& flat, double c) {
  std::size_t off = 0;
  for (std::size_t k = spec.scope_start(); k < p.weights.size(); ++k)
    for (double& v : p.weights[k].a) v += c * flat[off++];
  if (off != flat.size()) throw DimensionMismatch("add_to_scope_weights: length mismatch");
}

}  // namespace detail

// Mixed second derivatives of the mean loss: in-scope weight gradient
// differentiated in every bias coordinate by central differences. An empty
// sample contributes no curvature and maps to the zero matrix.
inline Mat cross_jacobian_bias(const MlpSpec& spec, const NetParams& p, const Dataset& data,
                               double step = 1e-4) {
  if (data.size() == 0) return Mat(spec.in_scope_weight_count(), spec.bias_count());
  NetParams work = p;
  auto grad_at = [&](const Vec& bflat) {
    detail::set_biases_from_flat(work, bflat);
    BackpropResult r = mlp_backprop(spec, work, data);
    return detail::flat_scope_weight_grads(spec, r.weight_grads);
  };
  DiffPlan plan;
  plan.step_mode = DiffPlan::StepMode::absolute;
  plan.base_step = step;
  return finite_diff_jacobian(grad_at, detail::flat_biases(p), plan);
}

// Bias-only refit on one data group, weights frozen. Backtracking gradient
// descent with a monotone acceptance rule: steps that raise the loss are
// halved away, accepted steps relax the rate back up. Returns the flattened
// fitted bias vector.
inline Vec mlp_refit_biases(const MlpSpec& spec, const NetParams& trained, const Dataset& group,
                            std::size_t max_iters = 500) {
  NetParams work = trained;
  double lr = 0.5;
  BackpropResult cur = mlp_backprop(spec, work, group);
  for (std::size_t it = 0; it < max_iters; ++it) {
    double ginf = 0.0;
    for (const Vec& gb : cur.bias_grads)
      for (double v : gb) ginf = std::max(ginf, std::abs(v));
    if (ginf < 1e-7) break;
    bool moved = false;
    while (lr >= 1e-6) {
      NetParams cand = work;
      for (std::size_t k = 0; k < cand.biases.size(); ++k)
        for (std::size_t j = 0; j < cand.biases[k].size(); ++j)
          cand.biases[k][j] -= lr * cur.bias_grads[k][j];
      BackpropResult next = mlp_backprop(spec, cand, group);
      // slack term keeps the line search alive once the true decrease per
      // step drops below double rounding on the loss
      if (std::isfinite(next.loss) && next.loss <= cur.loss + 1e-12 * (1.0 + std::abs(cur.loss))) {
        work = std::move(cand);
        cur = std::move(next);
        lr = std::min(lr * 2.0, 4.0);
        moved = true;
        break;
      }
      lr *= 0.5;
    }
    if (!moved) break;
  }
  return detail::flat_biases(work);
}

struct BiasPosterior {
  Vec variance_diag;  // posterior variance per bias coordinate (V_b/m diagonal)
  double tau2 = 0.0;  // prior scale
  std::size_t group_count = 0;
};

// Normal-normal aggregation of per-group bias fits: the between-group sample
// variance is shrunk toward the prior scale tau2 with one pseudo-group of
// prior weight. Off-diagonal covariance is dropped throughout.
inline BiasPosterior bias_posterior_from_refits(const std::vector<Vec>& fits, double tau2) {
  if (!(tau2 > 0.0)) throw InvalidParams("bias_posterior: tau2 must be positive");
  if (fits.size() < 2) throw InsufficientGroups("bias_posterior: need at least two group fits");
  const std::size_t G = fits.size(), d = fits[0].size();
  for (const Vec& f : fits)
    if (f.size() != d) throw DimensionMismatch("bias_posterior: ragged group fits");
  BiasPosterior post;
  post.tau2 = tau2;
  post.group_count = G;
  post.variance_diag.resize(d);
  const double nu0 = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const Vec& f : fits) mean += f[j];
    mean /= static_cast<double>(G);
    double ss = 0.0;
    for (const Vec& f : fits) ss += (f[j] - mean) * (f[j] - mean);
    const double s2 = ss / static_cast<double>(G - 1);
    post.variance_diag[j] = (static_cast<double>(G) * s2 + nu0 * tau2) / (static_cast<double>(G) + nu0);
  }
  return post;
}

inline BiasPosterior bias_posterior(const MlpSpec& spec, const NetParams& trained,
                                    const std::vector<Dataset>& groups, double tau2 = 0.01) {
  if (groups.size() < 5) throw InsufficientGroups("bias_posterior: need at least 5 groups");
  for (const Dataset& g : groups)
    if (g.size() < 50) throw InsufficientGroups("bias_posterior: each group needs >= 50 samples");
  std::vector<Vec> fits;
  fits.reserve(groups.size());
  for (const Dataset& g : groups) fits.push_back(mlp_refit_biases(spec, trained, g));
  return bias_posterior_from_refits(fits, tau2);
}

// Covariance pair for the in-scope weights: unadjusted inverse-information
// over n, widened by the bias-uncertainty term through the sensitivity
// matrix. The same ridge rule used for d1 stabilizes the inversion here.
inline CovariancePair adjusted_weight_cov(const Mat& fim_w, const SensitivityMatrix& d1,
                                          const BiasPosterior& post, std::size_t n) {
  if (n == 0) throw InvalidParams("adjusted_weight_cov: n must be positive");
  const Mat f_reg = fim_with_ridge(fim_w);
  Mat v_un = (1.0 / static_cast<double>(n)) * inverse_spd(f_reg);
  Mat v_alpha(post.variance_diag.size(), post.variance_diag.size());
  for (std::size_t j = 0; j < post.variance_diag.size(); ++j) {
    if (!(post.variance_diag[j] >= 0.0))
      throw InvalidParams("adjusted_weight_cov: bias posterior variance must be non-negative");
    v_alpha(j, j) = post.variance_diag[j];
  }
  return adjusted_covariance(v_un, d1, v_alpha, n, post.group_count);
}

// Sensitivity of the fitted in-scope weights in the bias assignment, formed
// from the score system of the mean loss: the weight-block curvature is the
// (ridge-stabilized) information matrix, the cross block the bias Jacobian.
inline SensitivityMatrix weight_bias_sensitivity(const Mat& fim_w, const Mat& cross_jac) {
  const Mat f_reg = fim_with_ridge(fim_w);
  return sensitivity_d1(-1.0 * f_reg, -1.0 * cross_jac);
}

struct ClassInterval {
  double mu_hat = 0.0, lower = 0.0, upper = 0.0;
};

struct PredictionCI {
  std::vector<ClassInterval> per_class;
  double level = 0.0;
  bool adjusted = false;
};

struct PredictionBands {
  PredictionCI adjusted;
  PredictionCI unadjusted;
  std::vector<Vec> gradients;  // delta-method gradient per class
};

namespace detail {

// Chain-rule gradient of the mean class-i probability through the scalar
// loss channel: restrict the loss to samples of class i, take its in-scope
// weight gradient as the perturbation direction, and measure d(mu_i)/d(C_i)
// by a symmetric step calibrated to move the loss by about 1e-3 each way.
inline Vec prediction_gradient_chain(const MlpSpec& spec, const NetParams& p, const Dataset& data,
                                     std::size_t cls) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.label(i) == static_cast<int>(cls)) idx.push_back(i);
  const std::size_t nscope = spec.in_scope_weight_count();
  if (idx.empty()) return Vec(nscope, 0.0);
  BackpropResult r = mlp_backprop(spec, p, data, &idx);
  Vec grad = flat_scope_weight_grads(spec, r.weight_grads);
  double norm = 0.0;
  for (double v : grad) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-12) return Vec(nscope, 0.0);
  const double h = 1e-3 / norm;
  NetParams work = p;
  add_to_scope_weights(spec, work, grad, h / norm);
  const double mu_p = class_probs_mean(spec, work, data)[cls];
  const double c_p = mlp_backprop(spec, work, data, &idx).loss;
  add_to_scope_weights(spec, work, grad, -2.0 * h / norm);
  const double mu_m = class_probs_mean(spec, work, data)[cls];
  const double c_m = mlp_backprop(spec, work, data, &idx).loss;
  const double dc = c_p - c_m;
  const double slope = std::abs(dc) > 1e-300 ? (mu_p - mu_m) / dc : 0.0;
  Vec g(nscope);
  for (std::size_t t = 0; t < nscope; ++t) g[t] = slope * grad[t];
  return g;
}

// Direct gradient of the mean normalized class-i probability in the
// in-scope weights, by backpropagating the normalization layer exactly.
inline Vec prediction_gradient_direct(const MlpSpec& spec, const NetParams& p, const Dataset& data,
                                      std::size_t cls) {
  const std::size_t K = p.weights.size();
  const std::size_t nscope = spec.in_scope_weight_count();
  Vec g(nscope, 0.0);
  if (data.size() == 0) return g;
  ForwardCache cache;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec out = mlp_forward(spec, p, data.x[i], &cache);
    double s = 0.0;
    for (double v : out) s += v;
    // d p_cls / d out_j for p = out / sum(out)
    Vec d(out.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double e = ((j == cls ? s : 0.0) - out[cls]) / (s * s);
      d[j] = e * activation_slope(spec.activation, out[j]);
    }
    std::vector<Vec> deltas(K);
    deltas[K - 1] = d;
    for (std::size_t k = K - 1; k-- > 0;) {
      const Mat& w = p.weights[k + 1];
      const Vec& a = cache.acts[k + 1];
      Vec dk(w.rows);
      for (std::size_t r0 = 0; r0 < w.rows; ++r0) {
        double acc = 0.0;
        for (std::size_t c0 = 0; c0 < w.cols; ++c0) acc += w(r0, c0) * deltas[k + 1][c0];
        dk[r0] = acc * activation_slope(spec.activation, a[r0]);
      }
      deltas[k] = std::move(dk);
    }
    std::size_t off = 0;
    for (std::size_t k = spec.scope_start(); k < K; ++k) {
      const Vec& a = cache.acts[k];
      const Vec& dd = deltas[k];
      for (double av : a)
        for (double dv : dd) g[off++] += av * dv;
    }
  }
  for (double& v : g) v /= static_cast<double>(data.size());
  return g;
}

}  // namespace detail

// Delta-method confidence intervals for the dataset-mean class
// probabilities, under both covariance readings of the pair. The chain-rule
// gradient construction is the default; `direct_gradient` switches to exact
// backpropagation of the normalized probability for cross-checking.
inline PredictionBands prediction_ci(const MlpSpec& spec, const NetParams& p,
                                     const CovariancePair& cov, const Dataset& data, double level,
                                     bool direct_gradient = false, bool compat_quantile = false) {
  if (data.size() == 0) throw InvalidData("prediction_ci: empty sample");
  const Vec mu = class_probs_mean(spec, p, data);
  PredictionBands bands;
  bands.adjusted.level = bands.unadjusted.level = level;
  bands.adjusted.adjusted = true;
  for (std::size_t cls = 0; cls < mu.size(); ++cls) {
    Vec g = direct_gradient ? detail::prediction_gradient_direct(spec, p, data, cls)
                            : detail::prediction_gradient_chain(spec, p, data, cls);
    Interval ia = delta_method_ci(mu[cls], g, cov.adjusted, level, compat_quantile);
    Interval iu = delta_method_ci(mu[cls], g, cov.unadjusted, level, compat_quantile);
    bands.adjusted.per_class.push_back({ia.mu, ia.lo, ia.hi});
    bands.unadjusted.per_class.push_back({iu.mu, iu.lo, iu.hi});
    bands.gradients.push_back(std::move(g));
  }
  return bands;
}

// Reorders the units of one hidden layer (layer_index counts layers as in
// layer_sizes, so valid values are 1..K-1): permutes the incoming weight
// columns and bias entries, and the outgoing weight rows. Forward outputs
// are invariant under this relabeling.
inline NetParams permute_hidden_units(const MlpSpec& spec, const NetParams& p,
                                      std::size_t layer_index, const std::vector<std::size_t>& perm) {
  if (layer_index == 0 || layer_index + 1 >= spec.layer_sizes.size())
    throw InvalidParams("permute_hidden_units: not a hidden layer");
  const std::size_t sz = spec.layer_sizes[layer_index];
  if (perm.size() != sz) throw DimensionMismatch("permute_hidden_units: permutation length");
  NetParams out = p;
  const std::size_t k_in = layer_index - 1, k_out = layer_index;
  for (std::size_t j = 0; j < sz; ++j) {
    for (std::size_t i = 0; i < p.weights[k_in].rows; ++i)
      out.weights[k_in](i, j) = p.weights[k_in](i, perm[j]);
    out.biases[k_in][j] = p.biases[k_in][perm[j]];
    for (std::size_t c = 0; c < p.weights[k_out].cols; ++c)
      out.weights[k_out](j, c) = p.weights[k_out](perm[j], c);
  }
  return out;
}

}  // namespace nadjust
