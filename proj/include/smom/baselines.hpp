#pragma once

// Reference estimators: least squares, Huber IRLS, RANSAC and the
// geometric-median-of-block-OLS ("metric MOM").

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "smom/dataset.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace smom {

struct BaselineResult {
  std::string method;
  Vector beta;
  std::map<std::string, double> meta;
};

namespace detail {

/// Weighted least squares min sum_i w_i (y_i - <x_i, beta>)^2 (unit weights when
/// w is null), by column-pivoted QR of diag(sqrt w) X. Attacked rows leave
/// X^T X too ill-conditioned for the normal equations, but QR copes.
template <class Rows>
Vector weighted_lstsq(const Rows& X, const Vector& y, const Vector* w = nullptr) {
  const Eigen::Index d = X.cols();
  Eigen::ColPivHouseholderQR<Matrix> qr;
  Vector rhs;
  if (w) {
    const Vector sw = w->cwiseSqrt();
    qr.compute(sw.asDiagonal() * X);
    rhs = sw.cwiseProduct(y);
  } else {
    qr.compute(X);
    rhs = y;
  }
  if (qr.rank() < d)
    throw Error(Errc::SingularGram, "design has rank " + std::to_string(qr.rank()) + " < d=" + std::to_string(d));
  Vector beta = qr.solve(rhs);
  if (!beta.allFinite()) throw Error(Errc::SingularGram, "least-squares solve produced non-finite values");
  return beta;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline BaselineResult ols(const Dataset& data) {
  data.validate();
  BaselineResult r;
  r.method = "ols";
  r.beta = detail::weighted_lstsq(data.X, data.y);
  return r;
}

/// Huber M-estimator by iteratively reweighted least squares with
/// w_i = min(1, delta / |r_i|), started from OLS.
inline BaselineResult huber(const Dataset& data, double delta = 1.35, int max_iters = 100) {
  if (!(delta > 0.0)) throw Error(Errc::InvalidArgument, "delta must be > 0");
  data.validate();
  BaselineResult r;
  r.method = "huber";
  Vector beta = detail::weighted_lstsq(data.X, data.y);
  Vector w(data.n());
  int it = 0;
  for (; it < max_iters; ++it) {
    const Vector res = data.y - data.X * beta;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const double a = std::abs(res[i]);
      w[i] = a > delta ? delta / a : 1.0;
    }
    const Vector next = detail::weighted_lstsq(data.X, data.y, &w);
    const double change = (next - beta).norm() / std::max(1.0, beta.norm());
    beta = next;
    if (change < 1e-8) {
      ++it;
      break;
    }
  }
  r.beta = beta;
  r.meta["iterations"] = it;
  return r;
}

/// Default RANSAC inlier tolerance: 3 * MAD of the OLS residuals, with a tiny
/// floor so noiseless data still admits exact fits.
inline double default_inlier_tol(const Dataset& data) {
  Vector res;
  try {
    res = data.y - data.X * ols(data).beta;
  } catch (const Error&) {
    res = data.y;
  }
  std::vector<double> r(res.data(), res.data() + res.size());
  const double med = detail::median_of(r);
  for (double& x : r) x = std::abs(x - med);
  const double mad = detail::median_of(r);
  std::vector<double> ay(data.y.data(), data.y.data() + data.y.size());
  for (double& x : ay) x = std::abs(x);
  return std::max(3.0 * mad, 1e-9 * (1.0 + detail::median_of(ay)));
}

inline BaselineResult ransac(const Dataset& data, int trials, double inlier_tol, Rng& rng) {
  if (trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  data.validate();
  const Eigen::Index n = data.n(), d = data.d();
  if (n <= d) throw Error(Errc::InvalidArgument, "RANSAC needs N > d");
  if (!(inlier_tol > 0.0)) throw Error(Errc::InvalidArgument, "inlier_tol must be > 0");

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> best;
  RowMatrix xs(d + 1, d);
  Vector ys(d + 1);
  int valid_trials = 0;
  for (int t = 0; t < trials; ++t) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index j = 0; j <= d; ++j) {
      std::uniform_int_distribution<Eigen::Index> pick(j, n - 1);
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick(rng))]);
      xs.row(j) = data.X.row(idx[static_cast<std::size_t>(j)]);
      ys[j] = data.y[idx[static_cast<std::size_t>(j)]];
    }
    Vector beta;
    try {
      beta = detail::weighted_lstsq(xs, ys);
    } catch (const Error&) {
      continue;
    }
    ++valid_trials;
    const Vector res = data.y - data.X * beta;
    std::vector<Eigen::Index> inliers;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(res[i]) <= inlier_tol) inliers.push_back(i);
    if (inliers.size() > best.size()) best = std::move(inliers);
  }
  if (best.size() < static_cast<std::size_t>(d + 1))
    throw Error(Errc::NoConsensus, "no trial reached d+1 inliers");
  RowMatrix xi(static_cast<Eigen::Index>(best.size()), d);
  Vector yi(static_cast<Eigen::Index>(best.size()));
  for (std::size_t k = 0; k < best.size(); ++k) {
    xi.row(static_cast<Eigen::Index>(k)) = data.X.row(best[k]);
    yi[static_cast<Eigen::Index>(k)] = data.y[best[k]];
  }
  BaselineResult r;
  r.method = "ransac";
  r.beta = detail::weighted_lstsq(xi, yi);
  r.meta["inliers"] = static_cast<double>(best.size());
  r.meta["valid_trials"] = valid_trials;
  return r;
}

inline BaselineResult ransac(const Dataset& data, Rng& rng) { return ransac(data, 100, default_inlier_tol(data), rng); }

struct GeometricMedian {
  Vector point;
  int iterations = 0;
};

/// Geometric median of the columns of `points` by Weiszfeld iteration with the
/// Vardi-Zhang correction at anchor points. Starts from the coordinate-wise median.
inline GeometricMedian geometric_median(const Matrix& points, double tol = 1e-9, int max_iters = 1000) {
  const Eigen::Index dim = points.rows(), n = points.cols();
  if (n == 0) throw Error(Errc::InvalidArgument, "no points");
  Vector x(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    std::vector<double> c(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = points(j, i);
    x[j] = detail::median_of(c);
  }
  GeometricMedian gm;
  for (int it = 0; it < max_iters; ++it) {
    gm.iterations = it + 1;
    Vector num = Vector::Zero(dim);
    Vector pull = Vector::Zero(dim);  // sum of unit vectors toward the non-coincident anchors
    double den = 0.0;
    int coincident = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector diff = points.col(i) - x;
      const double dist = diff.norm();
      if (dist <= 1e-15 * (1.0 + x.norm())) {
        ++coincident;
        continue;
      }
      num += points.col(i) / dist;
      pull += diff / dist;
      den += 1.0 / dist;
    }
    if (den == 0.0) break;  // every anchor coincides with x
    Vector next = num / den;
    if (coincident > 0) {
      const double r = pull.norm();
      if (r <= coincident) break;  // x is optimal
      const double a = coincident / r;
      next = (1.0 - a) * next + a * x;
    }
    const double step = (next - x).norm();
    x = next;
    if (step <= tol * std::max(1.0, x.norm())) break;
  }
  gm.point = x;
  return gm;
}

/// OLS on K contiguous blocks, then the geometric median of the block fits.
inline BaselineResult metric_mom(const Dataset& data, int K, int max_iters = 1000) {
  data.validate();
  const Eigen::Index n = data.n(), d = data.d();
  if (K < 1 || K > n) throw Error(Errc::InvalidK, "K must lie in [1, N]");
  const Eigen::Index m = n / K;
  if (m < d) throw Error(Errc::InvalidK, "block size N/K must be at least d");
  std::vector<Vector> fits;
  int dropped = 0;
  for (int k = 0; k < K; ++k) {
    try {
      fits.push_back(detail::weighted_lstsq(data.X.middleRows(k * m, m), data.y.segment(k * m, m)));
    } catch (const Error& e) {
      if (e.code() != Errc::SingularGram) throw;
      ++dropped;
    }
  }
  if (2 * dropped > K) throw Error(Errc::SingularGram, "more than half of the blocks are singular");
  Matrix pts(d, static_cast<Eigen::Index>(fits.size()));
  for (std::size_t i = 0; i < fits.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = fits[i];
  const GeometricMedian gm = geometric_median(pts, 1e-9, max_iters);
  BaselineResult r;
  r.method = "metric-mom";
  r.beta = gm.point;
  r.meta["iterations"] = gm.iterations;
  r.meta["dropped_blocks"] = dropped;
  return r;
}

}  // namespace smom
