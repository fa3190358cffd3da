#pragma once

// Benchmark sweeps: configuration, per-cell fitting across methods, the
// result table with its aggregates, and the files written for a sweep
// (results.csv, summary.json, plot.svg).

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "smom/baselines.hpp"
#include "smom/datagen.hpp"
#include "smom/dataset.hpp"
#include "smom/descent.hpp"
#include "smom/error.hpp"
#include "smom/rng.hpp"

namespace smom {

// ---------------------------------------------------------------------------
// Flat key = value configuration

/// Typed access to a KeyValues map that remembers which keys were read, so
/// that misspelled keys surface as configuration errors.
class ConfigReader {
 public:
  explicit ConfigReader(KeyValues kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    try {
      return parse_double(v);
    } catch (const Error&) {
      throw Error(Errc::Config, "key '" + key + "': not a number: '" + v + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const double v = get_double(key, 0.0);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw Error(Errc::Config, "key '" + key + "': not an integer");
    return static_cast<long long>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw Error(Errc::Config, "key '" + key + "': not an unsigned integer: '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(Errc::Config, "key '" + key + "': expected true/false, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) {
    if (!has(key)) return fallback;
    std::vector<std::string> out;
    const std::string raw = get_string(key, "");
    for (auto part : split_view(raw, ',')) {
      std::string t = trim(part);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const std::string& s : get_list(key, {})) {
      try {
        out.push_back(parse_double(s));
      } catch (const Error&) {
        throw Error(Errc::Config, "key '" + key + "': not a number: '" + s + "'");
      }
    }
    return out;
  }

  /// Throws on any key that was never read.
  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw Error(Errc::Config, "unknown configuration key '" + k + "'");
  }

 private:
  KeyValues kv_;
  std::set<std::string> used_;
};

inline ScoreScale parse_score_scale(const std::string& s) {
  if (s == "radius") return ScoreScale::Radius;
  if (s == "iteration-max") return ScoreScale::IterationMax;
  if (s == "margin") return ScoreScale::Margin;
  throw Error(Errc::Config, "unknown score_scale '" + s + "'");
}

/// Descent settings: `preset` (practical | analysis) first, then individual keys.
inline DescentConfig read_descent_config(ConfigReader& r, int default_K) {
  const std::string preset = r.get_string("preset", "practical");
  DescentConfig c;
  if (preset == "practical") {
    c = DescentConfig::practical(default_K);
  } else if (preset == "analysis") {
    c.K = default_K;
  } else {
    throw Error(Errc::Config, "unknown preset '" + preset + "'");
  }
  c.K = static_cast<int>(r.get_int("K", c.K));
  c.T_des = static_cast<int>(r.get_int("T_des", c.T_des));
  c.mwu_T = static_cast<int>(r.get_int("mwu_T", c.mwu_T));
  c.mwu_T_max = static_cast<int>(r.get_int("mwu_T_max", c.mwu_T_max));
  const std::string budget = r.get_string("mwu_budget", c.budget_rule == MwuBudget::Analysis ? "analysis" : "data");
  if (budget == "analysis")
    c.budget_rule = MwuBudget::Analysis;
  else if (budget == "data")
    c.budget_rule = MwuBudget::DataDependent;
  else
    throw Error(Errc::Config, "unknown mwu_budget '" + budget + "'");
  c.mwu_radius_padding = r.get_bool("mwu_radius_padding", c.mwu_radius_padding);
  c.bisection_steps = static_cast<int>(r.get_int("bisection_steps", c.bisection_steps));
  c.bisection_resolution = r.get_double("bisection_resolution", c.bisection_resolution);
  c.round_trials = static_cast<int>(r.get_int("round_trials", c.round_trials));
  c.power_iters = static_cast<int>(r.get_int("power_iters", c.power_iters));
  if (r.has("score_scale")) c.score_scale = parse_score_scale(r.get_string("score_scale", ""));
  c.early_accept = r.get_bool("early_accept", c.early_accept);
  c.early_reject = r.get_bool("early_reject", c.early_reject);
  c.step_scale = r.get_double("step_scale", c.step_scale);
  c.early_stop_rel = r.get_double("early_stop_rel", c.early_stop_rel);
  c.early_stop_abs = r.get_double("early_stop_abs", c.early_stop_abs);
  c.early_stop_patience = static_cast<int>(r.get_int("early_stop_patience", c.early_stop_patience));
  return c;
}

// ---------------------------------------------------------------------------
// Methods

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"spectral", "ols", "huber", "ransac", "metric-mom"};
  return m;
}

inline void check_method(const std::string& m) {
  const auto& k = known_methods();
  if (std::find(k.begin(), k.end(), m) == k.end()) throw Error(Errc::Config, "unknown method '" + m + "'");
}

struct MethodSettings {
  DescentConfig descent;      // K also sets the metric-MOM block count
  bool K_from_d = true;       // K = max(d, 10) unless K was configured
  double huber_delta = 1.35;
  int ransac_trials = 100;
  double ransac_tol = 0.0;    // 0: 3 * MAD of the OLS residuals
};

inline MethodSettings read_method_settings(ConfigReader& r) {
  MethodSettings s;
  s.K_from_d = !r.has("K");
  s.descent = read_descent_config(r, 10);
  s.huber_delta = r.get_double("huber_delta", s.huber_delta);
  s.ransac_trials = static_cast<int>(r.get_int("ransac_trials", s.ransac_trials));
  s.ransac_tol = r.get_double("ransac_tol", s.ransac_tol);
  return s;
}

/// Block count used for dimension d: the configured K, or K = d (at least 10,
/// the smallest count the pruning step accepts).
inline int block_count(const MethodSettings& s, Eigen::Index d) {
  return s.K_from_d ? static_cast<int>(std::max<Eigen::Index>(d, 10)) : s.descent.K;
}

struct MethodFit {
  Vector beta;
  std::optional<DescentTrace> trace;  // spectral only
};

inline MethodFit fit_method(const std::string& method, const Dataset& data, const PsdMatrix& sigma,
                            const MethodSettings& s, std::uint64_t seed) {
  MethodFit out;
  if (method == "spectral") {
    DescentConfig cfg = s.descent;
    cfg.K = block_count(s, data.d());
    cfg.seed = seed;
    FitResult r = robust_regression(data, ProblemSpec::from_sigma(sigma), cfg);
    out.beta = r.beta_hat;
    out.trace = std::move(r.trace);
  } else if (method == "ols") {
    out.beta = ols(data).beta;
  } else if (method == "huber") {
    out.beta = huber(data, s.huber_delta).beta;
  } else if (method == "ransac") {
    Rng rng = make_rng(seed);
    const double tol = s.ransac_tol > 0.0 ? s.ransac_tol : default_inlier_tol(data);
    out.beta = ransac(data, s.ransac_trials, tol, rng).beta;
  } else if (method == "metric-mom") {
    out.beta = metric_mom(data, block_count(s, data.d())).beta;
  } else {
    throw Error(Errc::Config, "unknown method '" + method + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep configuration

enum class SweepKind { ErrorVsD, ErrorVsSigma, ErrorVsK };

inline const char* sweep_name(SweepKind s) {
  switch (s) {
    case SweepKind::ErrorVsD: return "error_vs_d";
    case SweepKind::ErrorVsSigma: return "error_vs_sigma";
    case SweepKind::ErrorVsK: return "error_vs_K";
  }
  return "unknown";
}

inline SweepKind parse_sweep(const std::string& s) {
  for (SweepKind k : {SweepKind::ErrorVsD, SweepKind::ErrorVsSigma, SweepKind::ErrorVsK})
    if (s == sweep_name(k)) return k;
  throw Error(Errc::Config, "unknown sweep '" + s + "'");
}

struct ExperimentConfig {
  SweepKind sweep = SweepKind::ErrorVsD;
  std::vector<double> grid;
  double n_rule = 50.0;  // N = n_rule * d unless n is set
  Eigen::Index n = 0;
  Eigen::Index d = 10;   // fixed dimension for the sigma and K sweeps
  double sigma = 1.0;    // fixed noise level for the d and K sweeps
  double epsilon = 0.0;
  AttackKind attack = AttackKind::Mixed;
  TDesign design = TDesign::Independent;
  double student_df = 3.0;
  std::vector<std::string> methods = {"spectral"};
  int seeds = 50;
  std::uint64_t master_seed = 0;
  int threads = 1;
  bool timing_in_results = false;  // false keeps results.csv byte-reproducible
  std::filesystem::path output_dir = "bench_out";
  MethodSettings settings;

  void validate() const {
    if (grid.empty()) throw Error(Errc::Config, "grid must be nonempty");
    if (seeds < 1) throw Error(Errc::Config, "seeds must be >= 1");
    if (methods.empty()) throw Error(Errc::Config, "methods must be nonempty");
    for (const auto& m : methods) check_method(m);
    if (!(n_rule > 0.0) && n == 0) throw Error(Errc::Config, "n_rule must be > 0");
    if (threads < 1) throw Error(Errc::Config, "threads must be >= 1");
    for (double g : grid) {
      if (!std::isfinite(g)) throw Error(Errc::Config, "grid values must be finite");
      if (sweep != SweepKind::ErrorVsSigma && (g < 1 || g != std::floor(g)))
        throw Error(Errc::Config, std::string(sweep_name(sweep)) + " grid values must be positive integers");
    }
    settings.descent.validate();
  }

  static ExperimentConfig from_key_values(const KeyValues& kv) {
    ConfigReader r(kv);
    ExperimentConfig c;
    c.sweep = parse_sweep(r.get_string("sweep", sweep_name(c.sweep)));
    c.grid = r.get_doubles("grid", {});
    c.n_rule = r.get_double("n_rule", c.n_rule);
    c.n = static_cast<Eigen::Index>(r.get_int("n", 0));
    c.d = static_cast<Eigen::Index>(r.get_int("d", c.d));
    c.sigma = r.get_double("sigma", c.sigma);
    c.epsilon = r.get_double("epsilon", c.epsilon);
    c.attack = parse_attack(r.get_string("attack", attack_name(c.attack)));
    c.design = parse_design(r.get_string("design", design_name(c.design)));
    c.student_df = r.get_double("student_df", c.student_df);
    c.methods = r.get_list("methods", c.methods);
    c.seeds = static_cast<int>(r.get_int("seeds", c.seeds));
    c.master_seed = r.get_u64("seed", c.master_seed);
    c.threads = static_cast<int>(r.get_int("threads", c.threads));
    c.timing_in_results = r.get_bool("timing_in_results", c.timing_in_results);
    c.output_dir = r.get_string("output_dir", c.output_dir.string());
    c.settings = read_method_settings(r);
    r.finish();
    return c;
  }

  /// Generator settings for one grid value.
  GenSpec cell_spec(double value) const {
    GenSpec g;
    g.d = sweep == SweepKind::ErrorVsD ? static_cast<Eigen::Index>(value) : d;
    g.sigma = sweep == SweepKind::ErrorVsSigma ? value : sigma;
    g.n = n > 0 ? n : static_cast<Eigen::Index>(std::llround(n_rule * static_cast<double>(g.d)));
    g.epsilon = epsilon;
    g.attack = attack;
    g.design = design;
    g.student_df = student_df;
    return g;
  }

  MethodSettings cell_settings(double value) const {
    MethodSettings s = settings;
    if (sweep == SweepKind::ErrorVsK) {
      s.K_from_d = false;
      s.descent.K = static_cast<int>(value);
    }
    return s;
  }
};

/// Seed of a (grid value, replication) cell. Derived from the value itself,
/// not its position, so editing the grid leaves other cells untouched.
inline std::uint64_t cell_seed(std::uint64_t master, double value, int replication) {
  return derive_seed(master, {std::bit_cast<std::uint64_t>(value), static_cast<std::uint64_t>(replication)});
}

inline std::uint64_t method_seed(std::uint64_t cell, const std::string& method) {
  std::uint64_t h = 0;
  for (unsigned char ch : method) h = splitmix64(h ^ ch);
  return derive_seed(cell, {h});
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  double sweep_value = 0.0;
  std::string method;
  int seed = 0;  // replication index
  double error = std::numeric_limits<double>::quiet_NaN();  // |beta_hat - beta*|_2, NaN on failure
  double wall_ms = 0.0;
  std::string failure;  // empty on success
};

struct CellAggregate {
  double sweep_value = 0.0;
  std::string method;
  int runs = 0;
  int failures = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  double mean_wall_ms = 0.0;
};

struct ResultTable {
  std::string sweep;
  std::vector<ResultRow> rows;

  /// Per (sweep value, method), over the successful rows, in first-seen order.
  std::vector<CellAggregate> aggregates() const {
    std::vector<CellAggregate> out;
    std::map<std::pair<double, std::string>, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) {
      auto key = std::make_pair(r.sweep_value, r.method);
      if (!groups.count(key)) {
        CellAggregate a;
        a.sweep_value = r.sweep_value;
        a.method = r.method;
        out.push_back(a);
      }
      groups[key].push_back(&r);
    }
    for (auto& a : out) {
      const auto& g = groups[{a.sweep_value, a.method}];
      std::vector<double> errs;
      double wall = 0.0;
      for (const ResultRow* r : g) {
        wall += r->wall_ms;
        if (r->failure.empty() && std::isfinite(r->error))
          errs.push_back(r->error);
        else
          ++a.failures;
      }
      a.runs = static_cast<int>(g.size());
      a.mean_wall_ms = wall / static_cast<double>(g.size());
      if (!errs.empty()) {
        double sum = 0.0;
        for (double e : errs) sum += e;
        a.mean = sum / static_cast<double>(errs.size());
        a.max = *std::max_element(errs.begin(), errs.end());
        a.median = detail::median_of(errs);
      }
    }
    return out;
  }
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least-squares line through (x, y) with its coefficient of determination.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(Errc::InvalidArgument, "need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(Errc::InvalidArgument, "x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Sweep

/// Runs every grid value x replication cell; each cell draws one dataset and
/// fits every method on it. Cells are handed to `cfg.threads` workers from a
/// shared counter and written into fixed slots, so the table is independent
/// of scheduling. Failures are recorded per row and never stop the sweep.
inline ResultTable run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  ResultTable table;
  table.sweep = sweep_name(cfg.sweep);
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_cells = cfg.grid.size() * static_cast<std::size_t>(cfg.seeds);
  table.rows.resize(n_cells * n_methods);

  auto run_cell = [&](std::size_t cell) {
    const std::size_t gi = cell / static_cast<std::size_t>(cfg.seeds);
    const int rep = static_cast<int>(cell % static_cast<std::size_t>(cfg.seeds));
    const double value = cfg.grid[gi];
    const std::uint64_t seed = cell_seed(cfg.master_seed, value, rep);
    std::optional<Dataset> data;
    std::string gen_failure;
    GenSpec spec = cfg.cell_spec(value);
    spec.seed = seed;
    try {
      data = generate(spec);
    } catch (const std::exception& e) {
      gen_failure = std::string("generate: ") + e.what();
    }
    const MethodSettings settings = cfg.cell_settings(value);
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      // Rows grouped by grid value, then method, then replication.
      ResultRow& row = table.rows[(gi * n_methods + mi) * static_cast<std::size_t>(cfg.seeds) +
                                  static_cast<std::size_t>(rep)];
      row.sweep_value = value;
      row.method = cfg.methods[mi];
      row.seed = rep;
      if (!data) {
        row.failure = gen_failure;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        const MethodFit fit =
            fit_method(row.method, *data, spec.second_moment(), settings, method_seed(seed, row.method));
        row.error = (fit.beta - *data->truth).norm();
        if (!std::isfinite(row.error)) row.failure = "non-finite estimate";
      } catch (const std::exception& e) {
        row.failure = e.what();
      }
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), n_cells));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_cells; c = next++) run_cell(c);
      });
    for (auto& t : pool) t.join();
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

inline void write_results_csv(const ResultTable& t, std::ostream& os, bool timing = true) {
  os << "sweep_value,method,seed,error,wall_ms\n";
  for (const auto& r : t.rows)
    os << csv_number(r.sweep_value) << ',' << r.method << ',' << r.seed << ',' << csv_number(r.error) << ','
       << (timing ? csv_number(r.wall_ms) : "0") << '\n';
}

inline ResultTable read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "sweep_value,method,seed,error,wall_ms")
    throw Error(Errc::Parse, "results.csv: unexpected header");
  ResultTable t;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_view(line, ',');
    if (f.size() != 5) throw Error(Errc::Parse, "results.csv line " + std::to_string(lineno) + ": expected 5 fields");
    auto num = [&](std::string_view s) {
      return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(s);
    };
    ResultRow r;
    r.sweep_value = num(f[0]);
    r.method = std::string(f[1]);
    r.seed = static_cast<int>(parse_double(f[2]));
    r.error = num(f[3]);
    r.wall_ms = num(f[4]);
    if (!std::isfinite(r.error)) r.failure = "failed";
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline nlohmann::json summary_json(const ResultTable& t) {
  using nlohmann::json;
  json out;
  out["sweep"] = t.sweep;
  out["rows"] = t.rows.size();
  json cells = json::array();
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  const auto aggs = t.aggregates();
  for (const auto& a : aggs)
    cells.push_back({{"sweep_value", a.sweep_value},
                     {"method", a.method},
                     {"runs", a.runs},
                     {"failures", a.failures},
                     {"mean", num(a.mean)},
                     {"median", num(a.median)},
                     {"max", num(a.max)},
                     {"mean_wall_ms", a.mean_wall_ms}});
  out["cells"] = cells;

  // Mean error against the sweep value, per method (the linear-in-sigma check).
  json fits = json::object();
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& a : aggs)
    if (std::isfinite(a.mean)) {
      series[a.method].first.push_back(a.sweep_value);
      series[a.method].second.push_back(a.mean);
    }
  for (const auto& [m, xy] : series) {
    try {
      const LinearFit f = fit_line(xy.first, xy.second);
      fits[m] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
    } catch (const Error&) {
    }
  }
  out["mean_error_linear_fit"] = fits;

  json failures = json::array();
  for (const auto& r : t.rows)
    if (!r.failure.empty())
      failures.push_back({{"sweep_value", r.sweep_value}, {"method", r.method}, {"seed", r.seed}, {"error", r.failure}});
  out["failures"] = failures;
  return out;
}

/// Line chart of the mean error per method with a marker at each cell's max.
inline std::string plot_svg(const ResultTable& t) {
  const auto aggs = t.aggregates();
  std::vector<std::string> methods;
  for (const auto& a : aggs)
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& a : aggs) {
    xmin = std::min(xmin, a.sweep_value);
    xmax = std::max(xmax, a.sweep_value);
    if (std::isfinite(a.mean)) {
      ymin = std::min(ymin, a.mean);
      ymax = std::max(ymax, a.max);
    }
  }
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0;
  // Errors span orders of magnitude across methods: log scale when positive.
  const bool logy = ymin > 0.0 && ymax / ymin > 100.0;
  auto ty = [&](double v) { return logy ? std::log10(v) : v; };
  double y0 = ty(ymin), y1 = ty(ymax);
  if (y1 - y0 <= 0.0) y0 -= 0.5, y1 += 0.5;
  if (xmax - xmin <= 0.0) xmin -= 0.5, xmax += 0.5;

  const double W = 640, H = 400, L = 70, R = 150, T = 30, B = 50;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << t.sweep
     << ": mean error (line), max error (marker)</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << t.sweep.substr(t.sweep.rfind('_') + 1) << "</text>\n"
     << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
     << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << (logy ? "error (log10)" : "error") << "</text>\n";
  for (double f : {0.0, 0.5, 1.0}) {
    const double yv = y0 + f * (y1 - y0), xv = xmin + f * (xmax - xmin);
    const double label = logy ? std::pow(10.0, yv) : yv;
    os << "<text x=\"" << L - 6 << "\" y=\"" << H - B - f * (H - T - B) + 4
       << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(std::round(label * 1e4) / 1e4) << "</text>\n"
       << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << format_double(std::round(xv * 1e4) / 1e4) << "</text>\n";
  }
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const char* color = colors[mi % 6];
    std::vector<const CellAggregate*> pts;
    for (const auto& a : aggs)
      if (a.method == methods[mi] && std::isfinite(a.mean)) pts.push_back(&a);
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->sweep_value < b->sweep_value; });
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << format_double(px(pts[i]->sweep_value)) << ',' << format_double(py(pts[i]->mean));
    os << "\"/>\n";
    for (const auto* p : pts)
      os << "<circle cx=\"" << format_double(px(p->sweep_value)) << "\" cy=\"" << format_double(py(p->max))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (mi + 1) << "\" font-size=\"12\" fill=\"" << color
       << "\">" << methods[mi] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Writes results.csv, summary.json and plot.svg into `dir` (created if needed).
inline void emit_outputs(const ResultTable& t, const std::filesystem::path& dir, bool timing_in_results = false) {
  if (t.rows.empty()) throw Error(Errc::InvalidArgument, "empty result table");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create directory " + dir.string() + ": " + ec.message());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error(Errc::Io, "cannot open for writing: " + p.string());
    return os;
  };
  {
    auto os = open(dir / "results.csv");
    write_results_csv(t, os, timing_in_results);
    if (!os) throw Error(Errc::Io, "write failed: " + (dir / "results.csv").string());
  }
  {
    auto os = open(dir / "summary.json");
    os << summary_json(t).dump(2) << '\n';
    if (!os) throw Error(Errc::Io, "write failed: " + (dir / "summary.json").string());
  }
  {
    auto os = open(dir / "plot.svg");
    os << plot_svg(t);
    if (!os) throw Error(Errc::Io, "write failed: " + (dir / "plot.svg").string());
  }
}

}  // namespace smom
