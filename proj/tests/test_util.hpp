#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace testutil {

using smom::Matrix;
using smom::RowMatrix;
using smom::Vector;

inline RowMatrix gaussian_rows(int rows, int cols, smom::Rng& rng) {
  std::normal_distribution<double> n;
  RowMatrix a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = n(rng);
  return a;
}

inline Matrix random_orthogonal(int d, smom::Rng& rng) {
  const RowMatrix g = gaussian_rows(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr{Matrix(g)};
  return qr.householderQ() * Matrix::Identity(d, d);
}

/// Q diag(lambda) Q^T with eigenvalues uniform in [lo, hi].
inline Matrix random_spd(int d, smom::Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  const Matrix q = random_orthogonal(d, rng);
  Vector lambda(d);
  for (int i = 0; i < d; ++i) lambda[i] = u(rng);
  Matrix a = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

/// rows x cols matrix U S V^T whose Gram matrix has lambda_1 / lambda_2 >= gap.
inline RowMatrix matrix_with_gap(int rows, int cols, double gap, smom::Rng& rng) {
  const int r = std::min(rows, cols);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> s(static_cast<std::size_t>(r));
  for (auto& x : s) x = u(rng);
  std::sort(s.rbegin(), s.rend());
  std::uniform_real_distribution<double> boost(std::sqrt(gap), 2.0 * std::sqrt(gap));
  s[0] = s.size() > 1 ? s[1] * boost(rng) : s[0];
  const Matrix ul = random_orthogonal(rows, rng).leftCols(r);
  const Matrix vr = random_orthogonal(cols, rng).leftCols(r);
  Vector sv = Eigen::Map<Vector>(s.data(), r);
  return ul * sv.asDiagonal() * vr.transpose();
}

/// Euclidean projection onto {sum = 1, lo <= x <= cap}: the shift tau solving
/// sum clamp(y - tau, lo, cap) = 1 is found exactly among the breakpoints.
inline std::vector<double> project_capped_simplex(const std::vector<double>& y, double cap, double lo = 0.0) {
  std::vector<double> bps;
  for (double v : y) {
    bps.push_back(v - lo);
    bps.push_back(v - cap);
  }
  std::sort(bps.begin(), bps.end());
  auto mass = [&](double tau) {
    double s = 0;
    for (double v : y) s += std::clamp(v - tau, lo, cap);
    return s;
  };
  // mass is non-increasing in tau and piecewise linear between breakpoints.
  double a = bps.front(), b = bps.back();
  for (double t : bps) {
    if (mass(t) >= 1.0)
      a = t;
    else {
      b = t;
      break;
    }
  }
  const double ma = mass(a), mb = mass(b);
  const double tau = ma == mb ? a : a + (ma - 1.0) / (ma - mb) * (b - a);
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::clamp(y[i] - tau, lo, cap);
  return x;
}

/// KL projection onto the capped simplex by projected gradient descent on
/// f(x) = sum x log(x / w): Barzilai-Borwein steps with backtracking. A generic
/// convex solver, independent of the closed-form clamp-and-rescale. The
/// minimizer is strictly positive, so iterates stay in [floor, cap].
inline std::vector<double> kl_projection_oracle(const std::vector<double>& w, double cap, int max_iters = 200000,
                                                double floor = 1e-12) {
  const std::size_t n = w.size();
  auto f = [&](const std::vector<double>& x) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * std::log(x[i] / w[i]);
    return s;
  };
  auto grad = [&](const std::vector<double>& x) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::log(x[i] / w[i]) + 1.0;
    return g;
  };
  auto step_to = [&](const std::vector<double>& x, const std::vector<double>& g, double t) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - t * g[i];
    return project_capped_simplex(y, cap, floor);
  };
  std::vector<double> x = project_capped_simplex(std::vector<double>(n, 1.0 / static_cast<double>(n)), cap, floor);
  std::vector<double> g = grad(x);
  double t = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    // Stationarity: x is a fixed point of the unit-step projected gradient map.
    const std::vector<double> probe = step_to(x, g, 1.0);
    double res = 0;
    for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(probe[i] - x[i]));
    if (res < 1e-13) break;

    const double fx = f(x);
    std::vector<double> xn;
    for (;; t *= 0.5) {
      xn = step_to(x, g, t);
      double lin = 0, sq = 0;
      for (std::size_t i = 0; i < n; ++i) {
        lin += g[i] * (xn[i] - x[i]);
        sq += (xn[i] - x[i]) * (xn[i] - x[i]);
      }
      if (f(xn) <= fx + lin + sq / (2.0 * t) + 1e-15 || t < 1e-30) break;
    }
    const std::vector<double> gn = grad(xn);
    double ss = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ss += (xn[i] - x[i]) * (xn[i] - x[i]);
      sy += (xn[i] - x[i]) * (gn[i] - g[i]);
    }
    t = sy > 0 ? std::clamp(ss / sy, 1e-20, 1e20) : 1.0;
    x = std::move(xn);
    g = gn;
  }
  return x;
}

/// Sample median (mean of the middle pair for even sizes).
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace testutil
