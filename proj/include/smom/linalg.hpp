#pragma once

// Dense kernels shared by the estimator: PSD inverse square root, a randomized
// power method for the top right singular vector, and weighted row assembly.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "smom/error.hpp"
#include "smom/rng.hpp"

namespace smom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Symmetric positive semi-definite matrix. Symmetry is checked on construction;
/// the sign of the spectrum is only checked when the matrix is factorized.
class PsdMatrix {
 public:
  PsdMatrix() = default;

  explicit PsdMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw Error(Errc::DimensionMismatch, "PsdMatrix must be square");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale)
      throw Error(Errc::NotPsd, "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    m_ = 0.5 * (m_ + m_.transpose());
  }

  static PsdMatrix identity(Eigen::Index d) { return PsdMatrix(Matrix::Identity(d, d)); }
  static PsdMatrix scaled_identity(Eigen::Index d, double s) { return PsdMatrix(s * Matrix::Identity(d, d)); }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }

  /// x^T M x
  double quad(const Vector& x) const { return x.dot(m_ * x); }

 private:
  Matrix m_;
};

/// Vector with Euclidean norm 1 (to 1e-10), enforced by construction.
class UnitVector {
 public:
  UnitVector() = default;

  static UnitVector normalize(const Vector& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw Error(Errc::ZeroMatrix, "cannot normalize a zero or non-finite vector");
    UnitVector u;
    u.v_ = v / n;
    return u;
  }

  Eigen::Index dim() const { return v_.size(); }
  const Vector& vec() const { return v_; }
  double operator[](Eigen::Index i) const { return v_[i]; }

 private:
  Vector v_;
};

inline constexpr double kDefaultEigenFloor = 1e-10;

/// Symmetric inverse square root through an eigendecomposition.
/// `eigen_floor` is relative to the largest eigenvalue; anything below it is
/// treated as singular rather than pseudo-inverted.
inline PsdMatrix inv_sqrt_psd(const PsdMatrix& sigma, double eigen_floor = kDefaultEigenFloor) {
  if (!(eigen_floor > 0.0)) throw Error(Errc::InvalidArgument, "eigen_floor must be positive");
  if (sigma.dim() == 0) throw Error(Errc::DimensionMismatch, "empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma.matrix());
  if (es.info() != Eigen::Success) throw Error(Errc::NotPsd, "eigendecomposition failed");
  const Vector& lambda = es.eigenvalues();  // ascending
  const double lmax = lambda[lambda.size() - 1];
  if (!(lmax > 0.0)) throw Error(Errc::SingularSigma, "largest eigenvalue is not positive");
  const double neg_tol = 1e-12;
  if (lambda[0] < -neg_tol * lmax)
    throw Error(Errc::NotPsd, "negative eigenvalue " + std::to_string(lambda[0]));
  if (lambda[0] < eigen_floor * lmax)
    throw Error(Errc::SingularSigma, "eigenvalue " + std::to_string(lambda[0]) +
                                         " below floor relative to " + std::to_string(lmax));
  const Matrix& q = es.eigenvectors();
  Matrix out = q * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  return PsdMatrix(0.5 * (out + out.transpose()));
}

/// Stacks rows sqrt(w_i) * z_i into a K x d matrix.
inline RowMatrix weighted_rows(const RowMatrix& rows, std::span<const double> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != rows.rows())
    throw Error(Errc::DimensionMismatch, "one weight per row expected");
  RowMatrix a(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) a.row(i) = std::sqrt(weights[i]) * rows.row(i);
  return a;
}

/// Default iteration count of the power method: 10 * ceil(log2(d + K)).
inline int default_power_iters(Eigen::Index d, Eigen::Index k) {
  return 10 * static_cast<int>(std::ceil(std::log2(static_cast<double>(d + k))));
}

struct PowerResult {
  UnitVector direction;
  double rayleigh = 0.0;              // u^T (A^T A) u
  std::vector<double> rayleigh_trace;  // one entry per iteration
};

/// Approximate top right singular vector of `a` (equivalently the top
/// eigenvector of a^T a) from a fresh Gaussian start. Runs exactly
/// `num_iters` iterations; no convergence test, no restart.
inline PowerResult power_method(const RowMatrix& a, int num_iters, Rng& rng) {
  if (num_iters < 1) throw Error(Errc::InvalidArgument, "num_iters must be >= 1");
  const Eigen::Index k = a.rows();
  const Eigen::Index d = a.cols();
  if (d == 0 || k == 0 || a.cwiseAbs().maxCoeff() == 0.0)
    throw Error(Errc::ZeroMatrix, "all rows are zero");

  // Iterate on the d x d Gram matrix when that is cheaper than two passes over a.
  const double gram_cost = static_cast<double>(k) * d * d + static_cast<double>(num_iters) * d * d;
  const double direct_cost = 2.0 * num_iters * static_cast<double>(k) * d;
  const bool use_gram = gram_cost < direct_cost;
  Matrix gram;
  if (use_gram) gram = a.transpose() * a;
  auto apply = [&](const Vector& v) -> Vector {
    if (use_gram) return gram * v;
    Vector av = a * v;
    return a.transpose() * av;
  };

  std::normal_distribution<double> normal;
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = normal(rng);
  v.normalize();

  // The Rayleigh quotient of the current iterate falls out of the next
  // application, so the trace costs one extra product in total.
  PowerResult res;
  res.rayleigh_trace.reserve(static_cast<std::size_t>(num_iters));
  Vector w = apply(v);
  for (int it = 0; it < num_iters; ++it) {
    const double n = w.norm();
    if (!(n > 0.0)) {
      // Start landed in the null space; draw again.
      for (Eigen::Index j = 0; j < d; ++j) v[j] = normal(rng);
      v.normalize();
      w = apply(v);
      continue;
    }
    v = w / n;
    w = apply(v);
    res.rayleigh_trace.push_back(v.dot(w));
  }
  res.rayleigh = res.rayleigh_trace.empty() ? 0.0 : res.rayleigh_trace.back();
  res.direction = UnitVector::normalize(v);
  return res;
}

}  // namespace smom
