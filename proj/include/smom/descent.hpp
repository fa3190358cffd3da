#pragma once

// The outer estimator: at every iterate the pruned block statistics are
// recomputed, a bisection over margins picks the step length, a second
// direction search at that margin gives the descent direction, and the
// iterate moves by step * Sigma^{-1/2} u.
//
// Constants of the convergence analysis (for reference only, nothing asserts
// them): a good direction has <v, Sigma (beta_t - beta*)> >= c0 |beta_t - beta*|_Sigma
// with c0 = 2/100, a good step lies in [c1, c0] |beta_t - beta*|_Sigma with
// c1 = 49/100 * 1/10 * 2/100 * 100/102, and each iteration away from the noise
// floor contracts the Sigma-distance by at least 1 - 2/100000.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "smom/blocks.hpp"
#include "smom/dataset.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/mwu.hpp"
#include "smom/rng.hpp"

namespace smom {

/// Known second-moment matrix of the design and its inverse square root.
struct ProblemSpec {
  PsdMatrix sigma;
  PsdMatrix sigma_inv_sqrt;

  static ProblemSpec from_sigma(PsdMatrix s, double eigen_floor = kDefaultEigenFloor) {
    ProblemSpec p;
    p.sigma_inv_sqrt = inv_sqrt_psd(s, eigen_floor);
    p.sigma = std::move(s);
    return p;
  }

  Eigen::Index dim() const { return sigma.dim(); }

  /// |v|_Sigma
  double norm(const Vector& v) const { return std::sqrt(std::max(0.0, sigma.quad(v))); }
};

/// Step multiplier applied to the bisected margin, 2/100 * 1/10 * 100/102.
inline constexpr double kAnalysisStepScale = (2.0 / 100.0) * (1.0 / 10.0) * (100.0 / 102.0);

enum class MwuBudget {
  Analysis,       // ceil(6 ln(K') K)
  DataDependent,  // ceil(2 ln(K') R^2 / theta^2)
};

struct DescentConfig {
  int K = 10;
  int T_des = 100;
  int mwu_T = 0;  // 0: derived from budget_rule
  MwuBudget budget_rule = MwuBudget::Analysis;
  int mwu_T_max = 0;        // upper clamp on the derived budget, 0 = none
  /// Adds ceil(2 log2(R / theta)) iterations: the halvings a block of norm R
  /// needs before its weighted score drops to the theta^2 level.
  bool mwu_radius_padding = false;
  int bisection_steps = 0;  // 0: ceil(log2 K)
  /// Stop bisecting once (high - low) <= resolution * high; 0 disables.
  double bisection_resolution = 0.0;
  int round_trials = 0;  // 0: same as the MWU budget
  int power_iters = 0;   // 0: 10 * ceil(log2(d + K'))
  ScoreScale score_scale = ScoreScale::Radius;
  bool early_accept = false;
  bool early_reject = false;
  double step_scale = kAnalysisStepScale;
  double early_stop_rel = 0.0;
  double early_stop_abs = 0.0;
  int early_stop_patience = 3;
  std::uint64_t seed = 0;
  std::optional<Vector> warm_start;

  void validate() const {
    if (K < 10) throw Error(Errc::Config, "K must be >= 10");
    if (T_des < 1) throw Error(Errc::Config, "T_des must be >= 1");
    if (bisection_steps < 0) throw Error(Errc::Config, "bisection_steps must be >= 1 (or 0 for default)");
    if (mwu_T < 0 || mwu_T_max < 0 || round_trials < 0 || power_iters < 0)
      throw Error(Errc::Config, "budgets must be non-negative");
    if (!(step_scale > 0.0)) throw Error(Errc::Config, "step_scale must be > 0");
    if (bisection_resolution < 0.0 || early_stop_rel < 0.0 || early_stop_abs < 0.0)
      throw Error(Errc::Config, "tolerances must be >= 0");
    if (early_stop_patience < 1) throw Error(Errc::Config, "early_stop_patience must be >= 1");
  }

  /// Settings used by the command-line tool and the benchmarks. The literal
  /// step multiplier barely moves the iterate at desk scale, R^2-normalized
  /// scores cannot down-weight huge blocks that survive pruning within any
  /// affordable budget, and the fixed ceil(log2 K) bisection cannot reach
  /// margins many orders of magnitude below R.
  static DescentConfig practical(int K) {
    DescentConfig c;
    c.K = K;
    c.T_des = 60;
    c.mwu_T = 100;
    c.mwu_radius_padding = true;
    c.power_iters = 20;
    c.round_trials = 50;
    c.bisection_steps = 60;
    c.bisection_resolution = 0.01;
    c.score_scale = ScoreScale::Margin;
    c.early_accept = true;
    c.early_reject = true;
    c.step_scale = 0.05;
    return c;
  }

  int bisection_count() const {
    return bisection_steps > 0 ? bisection_steps
                               : std::max(1, static_cast<int>(std::ceil(std::log2(static_cast<double>(K)))));
  }

  int mwu_budget(Eigen::Index kept, double radius, double theta) const {
    int t = mwu_T;
    if (t == 0) {
      t = budget_rule == MwuBudget::Analysis ? analysis_mwu_iterations(kept, K)
                                            : data_dependent_mwu_iterations(kept, radius, theta);
      if (mwu_T_max > 0) t = std::min(t, mwu_T_max);
    }
    if (mwu_radius_padding && radius > theta) t += static_cast<int>(std::ceil(2.0 * std::log2(radius / theta)));
    return t;
  }

  MwuOptions mwu_options() const {
    MwuOptions o;
    o.power_iters = power_iters;
    o.round_trials = round_trials;
    o.score_scale = score_scale;
    o.early_accept = early_accept;
    o.early_reject = early_reject;
    return o;
  }
};

// ---------------------------------------------------------------------------
// Step size

struct StepSearch {
  double step = 0.0;    // d_low * step_scale
  double margin = 0.0;  // d_low, the largest margin certified by the search
  double radius = 0.0;
  int bregman_calls = 0;
};

/// Bisection of the margin over [0, R] on already pruned statistics: a failed
/// direction search lowers the upper end, a success raises the lower end.
inline StepSearch search_step_size(const BlockVectors& blocks, const DescentConfig& cfg, Rng& rng) {
  StepSearch s;
  s.radius = blocks.radius;
  if (!(blocks.radius > 0.0) || !std::isfinite(blocks.radius)) return s;  // R = 0: already converged
  const MwuOptions opts = cfg.mwu_options();
  double low = 0.0, high = blocks.radius;
  const int steps = cfg.bisection_count();
  for (int j = 0; j < steps; ++j) {
    if (cfg.bisection_resolution > 0.0 && high - low <= cfg.bisection_resolution * high) break;
    const double mid = 0.5 * (low + high);
    if (!(mid > 0.0)) break;
    const int T = cfg.mwu_budget(blocks.kept(), blocks.radius, mid);
    const DirectionResult r = bregman_regression(blocks, mid, T, rng, opts);
    ++s.bregman_calls;
    if (r.ok())
      low = mid;
    else
      high = mid;
  }
  s.margin = low;
  s.step = low * cfg.step_scale;
  return s;
}

// ---------------------------------------------------------------------------
// Descent direction

struct DirectionSearch {
  DirectionResult mwu;
  std::optional<Vector> g;  // -Sigma^{-1/2} u, |g|_Sigma = 1
};

/// Direction search at the margin theta / step_scale; the whitened direction
/// is mapped back through Sigma^{-1/2}.
inline DirectionSearch search_direction(const BlockVectors& blocks, const ProblemSpec& spec, const DescentConfig& cfg,
                                        double theta, Rng& rng) {
  if (!(theta > 0.0)) throw Error(Errc::InvalidArgument, "theta must be > 0");
  const double margin = theta / cfg.step_scale;
  const int T = cfg.mwu_budget(blocks.kept(), blocks.radius, margin);
  DirectionSearch out;
  out.mwu = bregman_regression(blocks, margin, T, rng, cfg.mwu_options());
  if (out.mwu.ok()) {
    // The block statistics concentrate around Sigma^{1/2}(beta* - beta_c), so
    // u points toward beta*; g is oriented along beta_c - beta* to make
    // beta - step * g a descent update.
    Vector g = -(spec.sigma_inv_sqrt.matrix() * out.mwu.direction->vec());
    // Renormalize in the Sigma metric to absorb rounding in Sigma^{-1/2}.
    const double n = spec.norm(g);
    out.g = g / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fit state and the public per-iteration operations

/// Per-fit state. Rows are copied into block order once so that every
/// iteration streams through memory instead of gathering scattered rows.
struct FitContext {
  RowMatrix design;    // block-ordered rows of X
  RowMatrix whitened;  // the same rows times Sigma^{-1/2}
  Vector response;
  BlockPartition partition;  // the drawn partition, in original row indices
  BlockPartition contiguous;  // block k covers rows [k m, (k + 1) m) of the copies

  BlockVectors blocks_at(const Vector& beta_c) const {
    return prune(block_statistics_whitened(design, whitened, response, beta_c, contiguous));
  }
};

inline FitContext make_fit_context(const Dataset& data, const ProblemSpec& spec, const DescentConfig& cfg, Rng& rng) {
  data.validate();
  cfg.validate();
  if (spec.dim() != data.d())
    throw Error(Errc::DimensionMismatch, "Sigma is " + std::to_string(spec.dim()) + "-dimensional, data has d=" +
                                             std::to_string(data.d()));
  if (data.n() < cfg.K)
    throw Error(Errc::InvalidK, "need N >= K (N=" + std::to_string(data.n()) + ", K=" + std::to_string(cfg.K) + ")");
  FitContext ctx;
  ctx.partition = partition_blocks(data.n(), cfg.K, rng);
  const Eigen::Index m = ctx.partition.m;
  const Eigen::Index used = m * ctx.partition.K;
  ctx.design.resize(used, data.d());
  ctx.response.resize(used);
  ctx.contiguous.K = ctx.partition.K;
  ctx.contiguous.m = m;
  ctx.contiguous.assignment.resize(ctx.partition.assignment.size());
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < ctx.partition.assignment.size(); ++k) {
    auto& block = ctx.contiguous.assignment[k];
    for (Eigen::Index i : ctx.partition.assignment[k]) {
      ctx.design.row(row) = data.X.row(i);
      ctx.response[row] = data.y[i];
      block.push_back(row++);
    }
  }
  ctx.whitened = whiten_rows(ctx.design, spec.sigma_inv_sqrt);
  return ctx;
}

/// Step length d_t at beta_c. A fresh block partition is drawn from `rng`.
inline double step_size(const Dataset& data, const Vector& beta_c, const ProblemSpec& spec, const DescentConfig& cfg,
                        Rng& rng) {
  const FitContext ctx = make_fit_context(data, spec, cfg, rng);
  return search_step_size(ctx.blocks_at(beta_c), cfg, rng).step;
}

/// Descent direction g_t at beta_c for step theta; throws DirectionSearchFailed.
inline Vector descent_direction(const Dataset& data, const Vector& beta_c, const ProblemSpec& spec,
                                const DescentConfig& cfg, double theta, Rng& rng) {
  const FitContext ctx = make_fit_context(data, spec, cfg, rng);
  DirectionSearch ds = search_direction(ctx.blocks_at(beta_c), spec, cfg, theta, rng);
  if (!ds.g)
    throw Error(Errc::DirectionSearchFailed,
                "no direction clears margin " + format_double(theta / cfg.step_scale) + " (" +
                    std::to_string(ds.mwu.iterations_used) + " MWU iterations, " +
                    std::to_string(ds.mwu.trials_used) + " rounding trials)");
  return *ds.g;
}

// ---------------------------------------------------------------------------
// Trace

enum class IterStatus { Success, Fail, ZeroStep };

inline const char* iter_status_name(IterStatus s) {
  switch (s) {
    case IterStatus::Success: return "success";
    case IterStatus::Fail: return "fail";
    case IterStatus::ZeroStep: return "zero_step";
  }
  return "unknown";
}

struct DescentRecord {
  int iter = 0;
  Vector beta;       // beta_t, before the update
  double theta = 0;  // certified margin d_low
  double step = 0;   // d_t
  Vector direction;  // g_t (zero when the iteration was skipped)
  IterStatus status = IterStatus::ZeroStep;
  int retries = 0;
  int bregman_calls = 0;
  double radius = 0;
  std::optional<double> dist_to_truth;  // |beta_{t+1} - beta*|_Sigma
  double wall_ms = 0;
};

struct DescentTrace {
  std::vector<DescentRecord> records;
  std::optional<double> initial_dist;  // |beta_0 - beta*|_Sigma
  Vector beta_hat;
  bool early_stopped = false;

  /// |beta_t - beta*|_Sigma for t = 0..T (empty without ground truth).
  std::vector<double> distances() const {
    std::vector<double> out;
    if (!initial_dist) return out;
    out.push_back(*initial_dist);
    for (const auto& r : records) out.push_back(*r.dist_to_truth);
    return out;
  }
};

inline void write_trace_jsonl(const DescentTrace& trace, std::ostream& os) {
  for (const auto& r : trace.records) {
    os << "{\"iter\":" << r.iter << ",\"theta\":" << format_double(r.theta) << ",\"step\":" << format_double(r.step);
    if (r.dist_to_truth) os << ",\"dist_to_truth\":" << format_double(*r.dist_to_truth);
    os << ",\"mwu_status\":\"" << iter_status_name(r.status) << "\",\"wall_ms\":" << format_double(r.wall_ms)
       << "}\n";
  }
}

inline void write_trace_jsonl(const DescentTrace& trace, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  write_trace_jsonl(trace, os);
}

// ---------------------------------------------------------------------------
// Estimator

struct FitResult {
  Vector beta_hat;
  DescentTrace trace;
};

inline FitResult robust_regression(const Dataset& data, const ProblemSpec& spec, const DescentConfig& cfg) {
  Rng rng = make_rng(cfg.seed);
  const FitContext ctx = make_fit_context(data, spec, cfg, rng);
  const Eigen::Index d = data.d();

  Vector beta = Vector::Zero(d);
  if (cfg.warm_start) {
    if (cfg.warm_start->size() != d) throw Error(Errc::DimensionMismatch, "warm start dimension");
    beta = *cfg.warm_start;
  }
  auto dist = [&](const Vector& b) -> std::optional<double> {
    if (!data.truth) return std::nullopt;
    return spec.norm(b - *data.truth);
  };

  FitResult out;
  out.trace.initial_dist = dist(beta);
  int quiet = 0;
  for (int t = 0; t < cfg.T_des; ++t) {
    const auto start = std::chrono::steady_clock::now();
    DescentRecord rec;
    rec.iter = t;
    rec.beta = beta;
    rec.direction = Vector::Zero(d);

    const BlockVectors blocks = ctx.blocks_at(beta);
    const StepSearch s = search_step_size(blocks, cfg, rng);
    rec.theta = s.margin;
    rec.radius = s.radius;
    rec.bregman_calls = s.bregman_calls;
    if (s.step > 0.0) {
      DirectionSearch ds = search_direction(blocks, spec, cfg, s.step, rng);
      ++rec.bregman_calls;
      if (!ds.g) {
        Rng retry = substream(rng);
        ds = search_direction(blocks, spec, cfg, s.step, retry);
        ++rec.bregman_calls;
        rec.retries = 1;
      }
      if (ds.g) {
        rec.status = IterStatus::Success;
        rec.step = s.step;
        rec.direction = *ds.g;
        beta = beta - rec.step * rec.direction;
      } else {
        rec.status = IterStatus::Fail;
      }
    }
    rec.dist_to_truth = dist(beta);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const double threshold = cfg.early_stop_rel * spec.norm(rec.beta) + cfg.early_stop_abs;
    out.trace.records.push_back(std::move(rec));

    if (threshold > 0.0 && out.trace.records.back().step < threshold) {
      if (++quiet >= cfg.early_stop_patience) {
        out.trace.early_stopped = true;
        break;
      }
    } else {
      quiet = 0;
    }
  }
  out.beta_hat = beta;
  out.trace.beta_hat = beta;
  return out;
}

}  // namespace smom
