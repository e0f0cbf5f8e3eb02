#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "nadjust/errors.hpp"

namespace nadjust {

using Vec = std::vector<double>;

// Dense row-major matrix. Deliberately minimal: the library only ever needs
// multiply/solve on small SPD matrices plus closed-form 2x2 eigen work for
// ellipses, so there is no expression-template machinery here.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}
  Mat(std::size_t r, std::size_t c, std::initializer_list<double> vals) : rows(r), cols(c), a(vals) {
    if (a.size() != r * c) throw DimensionMismatch("Mat initializer size does not match shape");
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline bool is_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool is_finite(const Mat& m) {
  for (double x : m.a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline Mat operator+(const Mat& x, const Mat& y) {
  if (!x.same_shape(y)) throw DimensionMismatch("Mat add: shape mismatch");
  Mat r = x;
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
  return r;
}

inline Mat operator-(const Mat& x, const Mat& y) {
  if (!x.same_shape(y)) throw DimensionMismatch("Mat sub: shape mismatch");
  Mat r = x;
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

inline Mat operator*(double s, const Mat& x) {
  Mat r = x;
  for (double& v : r.a) v *= s;
  return r;
}

inline Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw DimensionMismatch("matmul: inner dimensions differ");
  Mat r(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      double xik = x(i, k);
      if (xik == 0.0) continue;
      for (std::size_t j = 0; j < y.cols; ++j) r(i, j) += xik * y(k, j);
    }
  return r;
}

inline Mat transpose(const Mat& x) {
  Mat r(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) r(j, i) = x(i, j);
  return r;
}

inline Vec mat_vec(const Mat& x, const Vec& v) {
  if (x.cols != v.size()) throw DimensionMismatch("mat_vec: dimension mismatch");
  Vec r(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) r[i] += x(i, j) * v[j];
  return r;
}

inline double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw DimensionMismatch("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double quad_form(const Vec& g, const Mat& s) {
  return dot(g, mat_vec(s, g));
}

inline Mat symmetrize(const Mat& x) {
  if (x.rows != x.cols) throw DimensionMismatch("symmetrize: matrix not square");
  Mat r = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double v = 0.5 * (x(i, j) + x(j, i));
      r(i, j) = r(j, i) = v;
    }
  return r;
}

inline double trace(const Mat& x) {
  if (x.rows != x.cols) throw DimensionMismatch("trace: matrix not square");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) s += x(i, i);
  return s;
}

inline double max_abs(const Mat& x) {
  double m = 0.0;
  for (double v : x.a) m = std::max(m, std::abs(v));
  return m;
}

inline double frobenius(const Mat& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return std::sqrt(s);
}

// In-place lower Cholesky attempt. Returns false on a non-positive pivot
// (relative to `pivot_floor`) instead of throwing so callers can implement
// the jitter-and-retry policy.
inline bool cholesky(const Mat& x, Mat& lower, double pivot_floor = 0.0) {
  if (x.rows != x.cols) throw DimensionMismatch("cholesky: matrix not square");
  const std::size_t n = x.rows;
  lower = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = x(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > pivot_floor)) return false;  // catches NaN too
    lower(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = x(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / lower(j, j);
    }
  }
  return true;
}

inline Vec chol_solve_vec(const Mat& lower, const Vec& b) {
  const std::size_t n = lower.rows;
  Vec y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * y[k];
    y[i] = s / lower(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

struct SpdSolveResult {
  Mat x;
  bool regularized = false;  // jitter was needed to factor A
};

// Solve AX = B for symmetric positive (semi)definite A. If the factorization
// hits a pivot below 1e-10*trace(A)/d the solve is retried once with ridge
// jitter 1e-8*trace(A)/d added to the diagonal and the result is flagged;
// a second failure raises SingularMatrix. Long Monte Carlo runs must degrade
// gracefully on occasionally ill-conditioned replications rather than abort.
inline SpdSolveResult solve_spd(const Mat& A, const Mat& B) {
  if (A.rows != A.cols) throw DimensionMismatch("solve_spd: A not square");
  if (A.rows != B.rows) throw DimensionMismatch("solve_spd: A and B row counts differ");
  const std::size_t n = A.rows;
  const double scale = trace(A) / static_cast<double>(n);
  const double floor = 1e-10 * scale;

  SpdSolveResult out;
  Mat L;
  Mat work = symmetrize(A);
  if (!cholesky(work, L, floor)) {
    out.regularized = true;
    for (std::size_t i = 0; i < n; ++i) work(i, i) += 1e-8 * scale;
    if (!cholesky(work, L, 0.0))
      throw SingularMatrix("solve_spd: matrix not positive definite after jitter");
  }

  out.x = Mat(n, B.cols);
  Vec col(n);
  for (std::size_t j = 0; j < B.cols; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = B(i, j);
    Vec sol = chol_solve_vec(L, col);
    for (std::size_t i = 0; i < n; ++i) out.x(i, j) = sol[i];
  }
  return out;
}

inline Mat inverse_spd(const Mat& A, bool* regularized = nullptr) {
  SpdSolveResult r = solve_spd(A, Mat::identity(A.rows));
  if (regularized) *regularized = r.regularized;
  return r.x;
}

// min eigenvalue >= -tol certified by a jittered factorization attempt;
// exact closed form in the 2x2 case, Cholesky probe otherwise. This is all
// the PSD checking the adjustment machinery needs at any dimension.
inline bool min_eig_at_least(const Mat& A, double neg_tol) {
  if (A.rows != A.cols) throw DimensionMismatch("min_eig_at_least: matrix not square");
  const std::size_t n = A.rows;
  Mat s = symmetrize(A);
  if (n == 1) return s(0, 0) >= -neg_tol;
  if (n == 2) {
    double tr = s(0, 0) + s(1, 1);
    double det = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return (tr / 2.0 - disc) >= -neg_tol;
  }
  for (std::size_t i = 0; i < n; ++i) s(i, i) += neg_tol;
  Mat L;
  return cholesky(s, L, 0.0);
}

struct Eig2 {
  double l1 = 0.0, l2 = 0.0;  // l1 >= l2
  double v1x = 1.0, v1y = 0.0;  // unit eigenvector of l1
};

// Closed-form symmetric 2x2 eigendecomposition; all the ellipse geometry
// (axes, rotation angle, area) derives from this.
inline Eig2 eig_sym_2x2(const Mat& s) {
  if (s.rows != 2 || s.cols != 2) throw DimensionMismatch("eig_sym_2x2: need 2x2");
  double a = s(0, 0), b = 0.5 * (s(0, 1) + s(1, 0)), c = s(1, 1);
  Eig2 e;
  double tr = a + c, det = a * c - b * b;
  double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  e.l1 = tr / 2.0 + disc;
  e.l2 = tr / 2.0 - disc;
  if (std::abs(b) > 1e-300) {
    double vx = e.l1 - c, vy = b;
    double nrm = std::hypot(vx, vy);
    e.v1x = vx / nrm;
    e.v1y = vy / nrm;
  } else if (a >= c) {
    e.v1x = 1.0;
    e.v1y = 0.0;
  } else {
    e.v1x = 0.0;
    e.v1y = 1.0;
  }
  return e;
}

// Dominant eigenvalue via power iteration with a fixed deterministic start.
// Used to scale relative ridge regularization for large near-singular FIMs;
// a handful of digits of accuracy is plenty for that purpose.
inline double power_max_eig(const Mat& s, int iters = 100) {
  if (s.rows != s.cols) throw DimensionMismatch("power_max_eig: matrix not square");
  const std::size_t n = s.rows;
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 / std::sqrt(static_cast<double>(n) + i);
  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec w = mat_vec(s, v);
    double nrm = std::sqrt(dot(w, w));
    if (nrm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
    lam = nrm;
  }
  return lam;
}

}  // namespace nadjust
