#pragma once

// Median-of-means machinery: random block partition, whitened block
// statistics and norm-based pruning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "smom/dataset.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace smom {

struct BlockPartition {
  int K = 0;
  Eigen::Index m = 0;                                 // samples per block
  std::vector<std::vector<Eigen::Index>> assignment;  // K disjoint lists of length m
};

/// Shuffles 0..n-1 and cuts the permutation into K chunks of floor(n/K);
/// the trailing n - K*m indices are left out.
inline BlockPartition partition_blocks(Eigen::Index n, int K, Rng& rng) {
  if (K < 1 || K > n)
    throw Error(Errc::InvalidK, "K=" + std::to_string(K) + " must lie in [1, " + std::to_string(n) + "]");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  // Fisher-Yates, one draw per position.
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  BlockPartition p;
  p.K = K;
  p.m = n / K;
  p.assignment.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto first = perm.begin() + static_cast<std::ptrdiff_t>(k * p.m);
    p.assignment[static_cast<std::size_t>(k)].assign(first, first + p.m);
  }
  return p;
}

struct BlockVectors {
  RowMatrix raw;                  // K x d, row k is Z_k(beta_c)
  RowMatrix pruned;               // K' x d, smallest-norm rows of raw
  std::vector<int> kept_indices;  // block id of each pruned row
  double radius = 0.0;            // max norm over pruned rows

  Eigen::Index kept() const { return pruned.rows(); }
};

enum class Summation { Naive, Kahan };

/// Design matrix premultiplied by Sigma^{-1/2}, row by row. The descent
/// whitens once per fit and reuses it for every iterate.
inline RowMatrix whiten_rows(const RowMatrix& X, const PsdMatrix& sigma_inv_sqrt) {
  if (sigma_inv_sqrt.dim() != X.cols())
    throw Error(Errc::DimensionMismatch, "Sigma^{-1/2} is " + std::to_string(sigma_inv_sqrt.dim()) +
                                             "-dimensional but X has " + std::to_string(X.cols()) + " columns");
  // M is symmetric, so (M x_i)^T = x_i^T M.
  return X * sigma_inv_sqrt.matrix();
}

/// Block statistics from an already whitened design `W` (rows M x_i).
/// Z_k = (1/m) sum_{i in B_k} (y_i - <beta_c, x_i>) W_i.
inline RowMatrix block_statistics_whitened(const RowMatrix& X, const RowMatrix& W, const Vector& y,
                                           const Vector& beta_c, const BlockPartition& partition,
                                           Summation summation = Summation::Kahan) {
  const Eigen::Index d = X.cols();
  if (beta_c.size() != d)
    throw Error(Errc::DimensionMismatch, "beta_c has dimension " + std::to_string(beta_c.size()) +
                                             ", expected " + std::to_string(d));
  if (W.rows() != X.rows() || W.cols() != d || y.size() != X.rows())
    throw Error(Errc::DimensionMismatch, "inconsistent design / whitened design / response sizes");
  if (partition.m < 1) throw Error(Errc::InvalidK, "empty blocks");

  RowMatrix z(partition.K, d);
  Vector sum(d), comp(d);
  const double inv_m = 1.0 / static_cast<double>(partition.m);
  for (int k = 0; k < partition.K; ++k) {
    sum.setZero();
    comp.setZero();
    for (Eigen::Index i : partition.assignment[static_cast<std::size_t>(k)]) {
      if (i < 0 || i >= X.rows()) throw Error(Errc::DimensionMismatch, "block index out of range");
      const double r = y[i] - X.row(i).dot(beta_c);
      if (summation == Summation::Naive) {
        sum += r * W.row(i).transpose();
        continue;
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        const double term = r * W(i, j) - comp[j];
        const double t = sum[j] + term;
        comp[j] = (t - sum[j]) - term;
        sum[j] = t;
      }
    }
    z.row(k) = (inv_m * sum).transpose();
  }
  return z;
}

/// Raw block statistics Z_k(beta_c); `pruned` is left empty.
inline BlockVectors block_statistics(const Dataset& data, const Vector& beta_c, const PsdMatrix& sigma_inv_sqrt,
                                     const BlockPartition& partition, Summation summation = Summation::Kahan) {
  data.validate();
  const RowMatrix w = whiten_rows(data.X, sigma_inv_sqrt);
  BlockVectors bv;
  bv.raw = block_statistics_whitened(data.X, w, data.y, beta_c, partition, summation);
  return bv;
}

/// Number of blocks kept by pruning: floor(9K/10).
inline int pruned_count(int K) { return (9 * K) / 10; }

/// Keeps the floor(9K/10) rows of smallest Euclidean norm (stable, ties by
/// block index) and records their radius.
inline BlockVectors prune(const RowMatrix& raw) {
  const int K = static_cast<int>(raw.rows());
  if (K < 10) throw Error(Errc::TooFewBlocks, "pruning needs K >= 10, got " + std::to_string(K));
  std::vector<double> norms(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const double n = raw.row(k).norm();
    norms[static_cast<std::size_t>(k)] = std::isnan(n) ? std::numeric_limits<double>::infinity() : n;
  }
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return norms[static_cast<std::size_t>(a)] < norms[static_cast<std::size_t>(b)];
  });
  const int kept = pruned_count(K);
  BlockVectors bv;
  bv.raw = raw;
  bv.pruned.resize(kept, raw.cols());
  bv.kept_indices.assign(order.begin(), order.begin() + kept);
  for (int i = 0; i < kept; ++i) {
    const int k = bv.kept_indices[static_cast<std::size_t>(i)];
    bv.pruned.row(i) = raw.row(k);
    bv.radius = std::max(bv.radius, norms[static_cast<std::size_t>(k)]);
  }
  return bv;
}

}  // namespace smom
