#pragma once

// Monte-Carlo checks of the three block events behind the convergence
// analysis (multiplier process, quadratic process, block norms at a
// candidate). A trial passes when at least 19/20 of the blocks satisfy the
// inequality for every probed direction.
//
// The events quantify over all directions; here directions are sampled, so a
// passing report is a necessary condition only, never a certificate.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "smom/blocks.hpp"
#include "smom/datagen.hpp"
#include "smom/dataset.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace smom {

enum class EventKind { Multiplier, Quadratic, Init };

inline const char* event_name(EventKind e) {
  switch (e) {
    case EventKind::Multiplier: return "multiplier";
    case EventKind::Quadratic: return "quadratic";
    case EventKind::Init: return "init";
  }
  return "unknown";
}

inline EventKind parse_event(const std::string& s) {
  for (EventKind e : {EventKind::Multiplier, EventKind::Quadratic, EventKind::Init})
    if (s == event_name(e)) return e;
  throw Error(Errc::Config, "unknown event '" + s + "'");
}

struct EventReport {
  std::string event;
  int trials = 0;
  int passed = 0;
  double pass_fraction = 0.0;
  std::vector<double> worst_fraction;         // per trial: max over probes of violating blocks / K
  std::map<std::string, double> calibration;  // estimated constants and the bound used
  bool sandwich_checked = false;
  double sandwich_pass_fraction = 0.0;
};

/// A trial passes iff violations <= K/20.
inline bool within_tolerance(int violations, int K) { return 20 * violations <= K; }

namespace detail {

/// y_i - <beta*, x_i>, evaluated row by row like the generator so that
/// noiseless data gives exact zeros.
inline Vector truth_residual(const Dataset& data) {
  const Vector ones = Vector::Ones(data.d());
  Vector r(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) r[i] = data.y[i] - data.X.row(i).dot(ones);
  return r;
}

}  // namespace detail

struct CalibrationOptions {
  Eigen::Index samples = 1'000'000;
  Eigen::Index chunk = 100'000;
  int random_probes = 64;  // extra directions for the L4/L2 ratio, besides the axes
};

/// Moments of a large clean draw from the generator, in whitened coordinates.
struct Calibration {
  double sigma2 = 0.0;       // sup_u E[r^2 <u, X~>^2], r = y - <beta*, x>
  double gamma = 0.0;        // max over probes of sqrt(E <u,X~>^4) / E <u,X~>^2
  double expectation = 0.0;  // E[r^2 |X~|^2]
};

inline Calibration calibrate(const GenSpec& spec, Rng& rng, const CalibrationOptions& opts = {}) {
  GenSpec clean = spec;
  clean.epsilon = 0.0;
  clean.validate();
  const Eigen::Index d = spec.d;
  const PsdMatrix m_inv = inv_sqrt_psd(spec.second_moment());

  Matrix probes(d, d + opts.random_probes);
  probes.leftCols(d).setIdentity();
  std::normal_distribution<double> normal;
  for (int j = 0; j < opts.random_probes; ++j) {
    Vector g(d);
    for (Eigen::Index i = 0; i < d; ++i) g[i] = normal(rng);
    probes.col(d + j) = UnitVector::normalize(g).vec();
  }

  Matrix c = Matrix::Zero(d, d);
  Vector p2 = Vector::Zero(probes.cols()), p4 = Vector::Zero(probes.cols());
  double expectation = 0.0;
  Eigen::Index done = 0;
  while (done < opts.samples) {
    clean.n = std::min(opts.chunk, opts.samples - done);
    const Dataset part = generate_clean(clean, rng);
    const RowMatrix w = whiten_rows(part.X, m_inv);
    const Vector r = detail::truth_residual(part);
    const RowMatrix rw = r.asDiagonal() * w;
    c.selfadjointView<Eigen::Lower>().rankUpdate(rw.transpose());
    expectation += rw.rowwise().squaredNorm().sum();
    const Matrix p = w * probes;
    p2 += p.cwiseAbs2().colwise().sum().transpose();
    p4 += p.array().square().square().matrix().colwise().sum().transpose();
    done += clean.n;
  }
  const double n = static_cast<double>(done);
  c = c.selfadjointView<Eigen::Lower>();
  Calibration cal;
  cal.sigma2 = std::max(0.0, Eigen::SelfAdjointEigenSolver<Matrix>(c / n, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
  for (Eigen::Index j = 0; j < probes.cols(); ++j) {
    const double m2 = p2[j] / n, m4 = p4[j] / n;
    if (m2 > 0.0) cal.gamma = std::max(cal.gamma, std::sqrt(m4) / m2);
  }
  cal.expectation = expectation / n;
  return cal;
}

/// Unit vectors of the whitened space, one per column. u = Sigma^{-1/2} a
/// then has |u|_Sigma = 1 and <u, X> = <a, Sigma^{-1/2} X>.
inline Matrix random_unit_columns(Eigen::Index d, int count, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix a(d, count);
  for (int j = 0; j < count; ++j) {
    Vector g(d);
    for (Eigen::Index i = 0; i < d; ++i) g[i] = normal(rng);
    a.col(j) = UnitVector::normalize(g).vec();
  }
  return a;
}

/// `count` candidates with |beta_c - beta*|_Sigma = distance.
inline std::vector<Vector> random_beta_grid(const GenSpec& spec, int count, double distance, Rng& rng) {
  const PsdMatrix m_inv = inv_sqrt_psd(spec.second_moment());
  const Matrix a = random_unit_columns(spec.d, count, rng);
  std::vector<Vector> grid;
  for (int j = 0; j < count; ++j) grid.push_back(Vector::Ones(spec.d) + distance * (m_inv.matrix() * a.col(j)));
  return grid;
}

namespace detail {

struct Trial {
  Dataset data;
  RowMatrix whitened;
  BlockPartition partition;
  Vector residual;  // y - <beta*, x>
};

inline Trial draw_trial(const GenSpec& spec, const PsdMatrix& m_inv, int K, Rng& rng) {
  GenSpec s = spec;
  s.seed = rng();
  Trial t;
  t.data = generate(s);
  t.whitened = whiten_rows(t.data.X, m_inv);
  t.partition = partition_blocks(t.data.n(), K, rng);
  t.residual = truth_residual(t.data);
  return t;
}

/// Block means of the columns of `values` (N x p): K x p.
inline Matrix block_means(const Matrix& values, const BlockPartition& p) {
  Matrix out = Matrix::Zero(p.K, values.cols());
  for (int k = 0; k < p.K; ++k) {
    for (Eigen::Index i : p.assignment[static_cast<std::size_t>(k)]) out.row(k) += values.row(i);
    out.row(k) /= static_cast<double>(p.m);
  }
  return out;
}

inline void check_args(const GenSpec& spec, int K, int trials) {
  spec.validate();
  if (trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (K < 1 || K > spec.n) throw Error(Errc::InvalidK, "K must lie in [1, N]");
}

inline void finish(EventReport& rep) {
  rep.pass_fraction = static_cast<double>(rep.passed) / static_cast<double>(rep.trials);
}

}  // namespace detail

/// |1/m sum_{B_k} (y_i - <beta*, x_i>) <u, x_i>| <= r with r = 8 sigma sqrt(K/N).
inline EventReport check_multiplier_event(const GenSpec& spec, int K, int num_dirs, int trials, Rng& rng,
                                          const CalibrationOptions& cal_opts = {}) {
  detail::check_args(spec, K, trials);
  if (num_dirs < 1) throw Error(Errc::InvalidArgument, "num_dirs must be >= 1");
  const PsdMatrix m_inv = inv_sqrt_psd(spec.second_moment());
  const Calibration cal = calibrate(spec, rng, cal_opts);
  const double r = 8.0 * std::sqrt(cal.sigma2) * std::sqrt(static_cast<double>(K) / static_cast<double>(spec.n));

  EventReport rep;
  rep.event = event_name(EventKind::Multiplier);
  rep.trials = trials;
  rep.calibration = {{"sigma2", cal.sigma2}, {"r", r}};
  for (int t = 0; t < trials; ++t) {
    const detail::Trial tr = detail::draw_trial(spec, m_inv, K, rng);
    const Matrix a = random_unit_columns(spec.d, num_dirs, rng);
    const Matrix prod = tr.residual.asDiagonal() * (tr.whitened * a);
    const Matrix means = detail::block_means(prod, tr.partition);
    int worst = 0;
    for (int j = 0; j < num_dirs; ++j) {
      int v = 0;
      for (int k = 0; k < K; ++k) v += std::abs(means(k, j)) > r ? 1 : 0;
      worst = std::max(worst, v);
    }
    rep.worst_fraction.push_back(static_cast<double>(worst) / K);
    rep.passed += within_tolerance(worst, K) ? 1 : 0;
  }
  detail::finish(rep);
  return rep;
}

/// |1/m sum_{B_k} <u, x_i><v, x_i> - <u, Sigma v>| <= 6 gamma sqrt(1/m) |u|_Sigma |v|_Sigma
/// over random pairs. When m >= 360000 gamma^2 the report also checks
/// 99/100 <u,Sigma u> <= 1/m sum <u, x_i>^2 <= 101/100 <u,Sigma u> on every block.
inline EventReport check_quadratic_event(const GenSpec& spec, int K, int num_dirs, int trials, Rng& rng,
                                         const CalibrationOptions& cal_opts = {}) {
  detail::check_args(spec, K, trials);
  if (num_dirs < 1) throw Error(Errc::InvalidArgument, "num_dirs must be >= 1");
  const PsdMatrix m_inv = inv_sqrt_psd(spec.second_moment());
  const Calibration cal = calibrate(spec, rng, cal_opts);
  const Eigen::Index m = spec.n / K;
  const double bound = 6.0 * cal.gamma / std::sqrt(static_cast<double>(m));
  const bool sandwich = static_cast<double>(m) >= 360000.0 * cal.gamma * cal.gamma;

  EventReport rep;
  rep.event = event_name(EventKind::Quadratic);
  rep.trials = trials;
  rep.sandwich_checked = sandwich;
  rep.calibration = {{"gamma", cal.gamma}, {"bound", bound}};
  int sandwich_passed = 0;
  for (int t = 0; t < trials; ++t) {
    const detail::Trial tr = detail::draw_trial(spec, m_inv, K, rng);
    const Matrix a = random_unit_columns(spec.d, num_dirs, rng);
    const Matrix b = random_unit_columns(spec.d, num_dirs, rng);
    const Matrix pa = tr.whitened * a;
    const Matrix pb = tr.whitened * b;
    const Matrix means = detail::block_means(pa.cwiseProduct(pb), tr.partition);
    int worst = 0;
    for (int j = 0; j < num_dirs; ++j) {
      const double target = a.col(j).dot(b.col(j));
      int v = 0;
      for (int k = 0; k < K; ++k) v += std::abs(means(k, j) - target) > bound ? 1 : 0;
      worst = std::max(worst, v);
    }
    rep.worst_fraction.push_back(static_cast<double>(worst) / K);
    rep.passed += within_tolerance(worst, K) ? 1 : 0;
    if (sandwich) {
      const Matrix sq = detail::block_means(pa.cwiseAbs2(), tr.partition);
      sandwich_passed += (sq.array() >= 0.99).all() && (sq.array() <= 1.01).all() ? 1 : 0;
    }
  }
  detail::finish(rep);
  if (sandwich) rep.sandwich_pass_fraction = static_cast<double>(sandwich_passed) / trials;
  return rep;
}

/// |Z~_k(beta_c)|_2 <= 8 sqrt(E|r Sigma^{-1/2} X|^2 / m) + sqrt(d) |beta_c - beta*|_Sigma
/// for every candidate in the grid.
inline EventReport check_init_event(const GenSpec& spec, int K, const std::vector<Vector>& beta_grid, int trials,
                                    Rng& rng, const CalibrationOptions& cal_opts = {}) {
  detail::check_args(spec, K, trials);
  if (beta_grid.empty()) throw Error(Errc::InvalidArgument, "empty beta grid");
  for (const Vector& b : beta_grid)
    if (b.size() != spec.d) throw Error(Errc::DimensionMismatch, "grid point dimension");
  const PsdMatrix sigma = spec.second_moment();
  const PsdMatrix m_inv = inv_sqrt_psd(sigma);
  const Calibration cal = calibrate(spec, rng, cal_opts);
  const Eigen::Index m = spec.n / K;
  const double noise_term = 8.0 * std::sqrt(cal.expectation / static_cast<double>(m));
  const double sqrt_d = std::sqrt(static_cast<double>(spec.d));

  std::vector<double> bounds;
  for (const Vector& b : beta_grid) {
    const Vector diff = b - Vector::Ones(spec.d);
    bounds.push_back(noise_term + sqrt_d * std::sqrt(std::max(0.0, sigma.quad(diff))));
  }

  EventReport rep;
  rep.event = event_name(EventKind::Init);
  rep.trials = trials;
  rep.calibration = {{"expectation", cal.expectation}, {"noise_term", noise_term}};
  for (int t = 0; t < trials; ++t) {
    const detail::Trial tr = detail::draw_trial(spec, m_inv, K, rng);
    int worst = 0;
    for (std::size_t g = 0; g < beta_grid.size(); ++g) {
      const RowMatrix z =
          block_statistics_whitened(tr.data.X, tr.whitened, tr.data.y, beta_grid[g], tr.partition);
      int v = 0;
      for (int k = 0; k < K; ++k) v += z.row(k).norm() > bounds[g] ? 1 : 0;
      worst = std::max(worst, v);
    }
    rep.worst_fraction.push_back(static_cast<double>(worst) / K);
    rep.passed += within_tolerance(worst, K) ? 1 : 0;
  }
  detail::finish(rep);
  return rep;
}

/// One of the reference configurations: Gaussian design, sizes chosen per event.
struct DiagnosticConfig {
  EventKind event = EventKind::Multiplier;
  GenSpec gen;
  int K = 100;
  int num_dirs = 50;
  int trials = 100;
  int grid_size = 20;
  double grid_distance = 1.0;
  CalibrationOptions calibration;

  static DiagnosticConfig reference(EventKind e) {
    DiagnosticConfig c;
    c.event = e;
    c.gen.design = TDesign::Gaussian;
    c.gen.sigma = 1.0;
    c.gen.epsilon = 0.0;
    switch (e) {
      case EventKind::Multiplier:
        c.gen.d = 2;
        c.K = 100;
        c.gen.n = 100 * 100;
        break;
      case EventKind::Quadratic:
        c.gen.d = 2;
        c.K = 50;
        c.gen.n = 50 * 200;
        break;
      case EventKind::Init:
        c.gen.d = 3;
        c.K = 60;
        c.gen.n = 60 * 150;
        break;
    }
    return c;
  }
};

inline EventReport run_diagnostic(const DiagnosticConfig& cfg, Rng& rng) {
  switch (cfg.event) {
    case EventKind::Multiplier:
      return check_multiplier_event(cfg.gen, cfg.K, cfg.num_dirs, cfg.trials, rng, cfg.calibration);
    case EventKind::Quadratic:
      return check_quadratic_event(cfg.gen, cfg.K, cfg.num_dirs, cfg.trials, rng, cfg.calibration);
    case EventKind::Init: {
      const std::vector<Vector> grid = random_beta_grid(cfg.gen, cfg.grid_size, cfg.grid_distance, rng);
      return check_init_event(cfg.gen, cfg.K, grid, cfg.trials, rng, cfg.calibration);
    }
  }
  throw Error(Errc::InvalidArgument, "unknown event");
}

}  // namespace smom
