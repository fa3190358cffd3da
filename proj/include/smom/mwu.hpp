#pragma once

// Direction finder for the approximate furthest-hyperplane problem on the
// pruned block statistics: multiplicative weights over the blocks, a KL
// projection onto the capped simplex, and Gaussian rounding of the collected
// top singular directions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "smom/blocks.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace smom {

/// Point of the capped probability simplex {w : sum w = 1, 0 <= w_i <= cap}.
struct WeightVector {
  std::vector<double> w;
  double cap = 1.0;

  std::size_t size() const { return w.size(); }
};

/// KL (Bregman) projection of a probability vector onto the capped simplex.
/// The minimizer has the form w'_i = min(cap, c * w_i); entries are clamped
/// and the free mass rescaled until no free entry exceeds the cap.
inline WeightVector kl_project_capped(std::span<const double> w, double cap) {
  const std::size_t n = w.size();
  if (n == 0) throw Error(Errc::Infeasible, "empty weight vector");
  std::size_t positive = 0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(Errc::InvalidArgument, "weights must be finite and >= 0");
    positive += x > 0.0 ? 1 : 0;
  }
  // Zero entries must stay zero (infinite divergence otherwise).
  if (!(cap > 0.0) || cap * static_cast<double>(positive) < 1.0 - 1e-12)
    throw Error(Errc::Infeasible, "cap * (#positive entries) < 1");

  WeightVector out;
  out.cap = cap;
  out.w.assign(w.begin(), w.end());
  std::vector<bool> clamped(n, false);
  std::size_t num_clamped = 0;
  for (std::size_t round = 0; round <= n; ++round) {
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!clamped[i]) free_mass += w[i];
    const double budget = 1.0 - cap * static_cast<double>(num_clamped);
    const double scale = free_mass > 0.0 ? budget / free_mass : 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (clamped[i]) continue;
      if (w[i] * scale > cap) {
        clamped[i] = true;
        ++num_clamped;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t i = 0; i < n; ++i) out.w[i] = clamped[i] ? cap : w[i] * scale;
      return out;
    }
  }
  throw Error(Errc::Infeasible, "capped projection did not settle");  // unreachable when feasible
}

enum class MwuStatus { Success, Fail };

inline const char* status_name(MwuStatus s) { return s == MwuStatus::Success ? "success" : "fail"; }

struct DirectionResult {
  MwuStatus status = MwuStatus::Fail;
  std::optional<UnitVector> direction;
  int margin_count = 0;     // blocks with <Z'_k, u> > theta/10
  int iterations_used = 0;  // MWU iterations actually run
  int trials_used = 0;      // rounding trials

  bool ok() const { return status == MwuStatus::Success; }
};

/// Blocks that must clear the margin for a direction to be accepted: ceil(0.4 K').
inline int required_margin_count(Eigen::Index kept) { return static_cast<int>((2 * kept + 4) / 5); }

inline int count_margin(const RowMatrix& pruned, const Vector& u, double theta) {
  const Vector proj = pruned * u;
  const double thr = theta / 10.0;
  int c = 0;
  for (Eigen::Index k = 0; k < proj.size(); ++k) c += proj[k] > thr ? 1 : 0;
  return c;
}

/// Gaussian rounding: u = sum_j g_j u_j / |sum_j g_j u_j| with g_j ~ N(0,1),
/// accepted once ceil(0.4 K') blocks have margin above theta/10. `directions`
/// is d x T, one unit vector per column.
inline DirectionResult round_directions(const RowMatrix& pruned, double theta, const Matrix& directions,
                                        int max_trials, Rng& rng) {
  if (directions.cols() == 0) throw Error(Errc::InvalidArgument, "no directions to round");
  if (directions.rows() != pruned.cols()) throw Error(Errc::DimensionMismatch, "direction dimension");
  if (max_trials < 1) throw Error(Errc::InvalidArgument, "max_trials must be >= 1");
  const int need = required_margin_count(pruned.rows());
  const double thr = theta / 10.0;
  // Projections of every block on every direction, so each trial is O(K' T).
  const Matrix proj = pruned * directions;  // K' x T
  std::normal_distribution<double> normal;
  Vector g(directions.cols());
  DirectionResult res;
  for (int trial = 1; trial <= max_trials; ++trial) {
    for (Eigen::Index j = 0; j < g.size(); ++j) g[j] = normal(rng);
    res.trials_used = trial;
    const Vector v = directions * g;
    const double norm = v.norm();
    if (!(norm > 0.0)) continue;
    const Vector margins = proj * g / norm;
    int count = 0;
    for (Eigen::Index k = 0; k < margins.size(); ++k) count += margins[k] > thr ? 1 : 0;
    if (count >= need) {
      res.status = MwuStatus::Success;
      res.direction = UnitVector::normalize(v);
      // Recount from the normalized vector so the report matches the direction.
      res.margin_count = count_margin(pruned, res.direction->vec(), theta);
      if (res.margin_count >= need) return res;
      res.status = MwuStatus::Fail;
      res.direction.reset();
    }
  }
  res.margin_count = 0;
  return res;
}

inline DirectionResult round_directions(const BlockVectors& blocks, double theta, const Matrix& directions,
                                        int max_trials, Rng& rng) {
  return round_directions(blocks.pruned, theta, directions, max_trials, rng);
}

/// How the per-block scores <Z'_i, u_t>^2 are brought into [0, 1].
enum class ScoreScale {
  Radius,        // divide by R^2
  IterationMax,  // divide by max_i <Z'_i, u_t>^2
  Margin,        // divide by theta^2 and clip at 1
};

/// Default MWU budget ceil(6 ln(K') K).
inline int analysis_mwu_iterations(Eigen::Index kept, int K) {
  return std::max(1, static_cast<int>(std::ceil(6.0 * std::log(static_cast<double>(kept)) * K)));
}

/// Data-dependent budget ceil(2 ln(K') R^2 / theta^2).
inline int data_dependent_mwu_iterations(Eigen::Index kept, double radius, double theta) {
  const double t = 2.0 * std::log(static_cast<double>(kept)) * radius * radius / (theta * theta);
  if (!std::isfinite(t) || t > 1e9) return 1'000'000'000;
  return std::max(1, static_cast<int>(std::ceil(t)));
}

struct MwuOptions {
  int power_iters = 0;   // 0: 10 * ceil(log2(d + K'))
  int round_trials = 0;  // 0: T
  double cap_fraction = 0.8;
  ScoreScale score_scale = ScoreScale::Radius;
  /// Return as soon as +-u_t itself clears the margin on enough blocks,
  /// skipping the remaining iterations and the rounding.
  bool early_accept = false;
  /// Give up once the top eigenvalue of sum_i w_i Z'_i Z'_i^T, estimated by
  /// the power method, falls below (theta/10)^2 / 4. A direction clearing the
  /// margin on 40% of the blocks keeps at least a quarter of any capped weight
  /// vector, so it would hold the eigenvalue above that level.
  bool early_reject = false;
  /// Observer of the weights after each projection (tests assert invariants here).
  /// Arguments: iteration, projected weights, total before normalization.
  std::function<void(int, std::span<const double>, double)> on_iteration;
};

/// Multiplicative-weights search for a unit vector u with <Z'_k, u> > theta/10
/// on at least ceil(0.4 K') pruned blocks. Runs T iterations, then rounds.
inline DirectionResult bregman_regression(const BlockVectors& blocks, double theta, int T, Rng& rng,
                                          const MwuOptions& opts = {}) {
  if (!(theta > 0.0)) throw Error(Errc::InvalidArgument, "theta must be > 0");
  if (T < 1) throw Error(Errc::InvalidArgument, "T must be >= 1");
  const RowMatrix& z = blocks.pruned;
  const Eigen::Index kept = z.rows();
  const Eigen::Index d = z.cols();
  if (kept == 0) throw Error(Errc::InvalidArgument, "no pruned blocks");

  DirectionResult fail;
  const double radius = blocks.radius;
  if (!(radius > 0.0) || !std::isfinite(radius)) return fail;

  // <Z'_k, u> <= |Z'_k|, so with too few long blocks no direction can clear
  // the margin and the rounding is certain to fail.
  const int need = required_margin_count(kept);
  int long_blocks = 0;
  for (Eigen::Index k = 0; k < kept; ++k) long_blocks += z.row(k).norm() > theta / 10.0 ? 1 : 0;
  if (long_blocks < need) return fail;

  const int power_iters = opts.power_iters > 0 ? opts.power_iters : default_power_iters(d, kept);
  const double cap = 1.0 / (opts.cap_fraction * static_cast<double>(kept));
  const double r2 = radius * radius;

  std::vector<double> w(static_cast<std::size_t>(kept), 1.0 / static_cast<double>(kept));
  Matrix directions(d, T);
  RowMatrix a(kept, d);
  int used = 0;
  for (int t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < kept; ++i) a.row(i) = std::sqrt(w[static_cast<std::size_t>(i)]) * z.row(i);
    PowerResult pm;
    try {
      pm = power_method(a, power_iters, rng);
    } catch (const Error& e) {
      if (e.code() == Errc::ZeroMatrix) return fail;
      throw;
    }
    const Vector& u = pm.direction.vec();
    directions.col(t) = u;
    ++used;
    if (opts.early_reject && pm.rayleigh < 0.25 * (theta / 10.0) * (theta / 10.0)) {
      fail.iterations_used = used;
      return fail;
    }

    const Vector proj = z * u;
    if (opts.early_accept) {
      const double thr = theta / 10.0;
      int pos = 0, neg = 0;
      for (Eigen::Index i = 0; i < kept; ++i) {
        pos += proj[i] > thr ? 1 : 0;
        neg += -proj[i] > thr ? 1 : 0;
      }
      if (pos >= need || neg >= need) {
        DirectionResult res;
        res.status = MwuStatus::Success;
        res.direction = pos >= need ? pm.direction : UnitVector::normalize(-u);
        res.margin_count = pos >= need ? pos : neg;
        res.iterations_used = used;
        return res;
      }
    }
    double scale = r2;
    if (opts.score_scale == ScoreScale::IterationMax) scale = proj.cwiseAbs2().maxCoeff();
    if (opts.score_scale == ScoreScale::Margin) scale = theta * theta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < kept; ++i) {
      const double sigma = scale > 0.0 ? std::min(1.0, proj[i] * proj[i] / scale) : 0.0;
      w[static_cast<std::size_t>(i)] *= 1.0 - sigma / 2.0;
      total += w[static_cast<std::size_t>(i)];
    }
    for (double& x : w) x /= total;
    WeightVector projected = kl_project_capped(w, cap);
    w = std::move(projected.w);
    if (opts.on_iteration) opts.on_iteration(t, w, total);
  }

  const int trials = opts.round_trials > 0 ? opts.round_trials : T;
  DirectionResult res = round_directions(z, theta, directions.leftCols(used), trials, rng);
  res.iterations_used = used;
  return res;
}

}  // namespace smom
