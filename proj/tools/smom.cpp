// Command-line front end: gen-data, fit, bench, diagnose.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "smom/diagnostics.hpp"
#include "smom/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smom;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value configuration file");
  cmd->add_option("--seed", f.seed, "master seed (overrides the config's seed)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

KeyValues load_config(const CommonFlags& f) {
  if (f.config.empty()) return {};
  try {
    return read_key_values(f.config);
  } catch (const Error& e) {
    throw Error(Errc::Config, std::string("config ") + f.config + ": " + e.what());
  }
}

fs::path out_dir(const CommonFlags& f, const std::string& fallback) {
  fs::path p = f.out.empty() ? fs::path(fallback) : fs::path(f.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(Errc::Io, "cannot create directory " + p.string() + ": " + ec.message());
  return p;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
}

fs::path sidecar_for(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta");
  return p;
}

int cmd_gen_data(const CommonFlags& f) {
  ConfigReader r(load_config(f));
  GenSpec g;
  g.n = static_cast<Eigen::Index>(r.get_int("n", g.n));
  g.d = static_cast<Eigen::Index>(r.get_int("d", g.d));
  g.sigma = r.get_double("sigma", g.sigma);
  g.epsilon = r.get_double("epsilon", g.epsilon);
  g.student_df = r.get_double("student_df", g.student_df);
  g.attack = parse_attack(r.get_string("attack", attack_name(g.attack)));
  g.design = parse_design(r.get_string("design", design_name(g.design)));
  g.seed = r.get_u64("seed", g.seed);
  r.finish();
  if (f.seed) g.seed = *f.seed;
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }

  const fs::path dir = out_dir(f, ".");
  const Dataset data = generate(g);
  write_dataset_csv(data, dir / "data.csv");
  write_key_values(make_meta(g).to_key_values(), dir / "data.meta");
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << data.n() << " x " << data.d() << ", "
            << data.outlier_count() << " outliers)\n";
  return kOk;
}

int cmd_fit(const CommonFlags& f, const std::string& method, const std::string& data_path) {
  check_method(method);
  ConfigReader r(load_config(f));
  const double sigma_scale_cfg = r.get_double("sigma_scale", 0.0);
  MethodSettings s = read_method_settings(r);
  std::uint64_t seed = r.get_u64("seed", 0);
  r.finish();
  if (f.seed) seed = *f.seed;
  try {
    s.descent.validate();
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }

  const Dataset data = read_dataset_csv(data_path);
  std::optional<DatasetMeta> meta;
  if (const fs::path side = sidecar_for(data_path); fs::exists(side)) meta = DatasetMeta::from_key_values(read_key_values(side));
  double sigma_scale = sigma_scale_cfg;
  if (sigma_scale <= 0.0 && meta && meta->extra.count("second_moment_scale"))
    sigma_scale = parse_double(meta->extra.at("second_moment_scale"));
  if (method == "spectral" && !(sigma_scale > 0.0))
    throw Error(Errc::Config, "spectral needs Sigma: set sigma_scale (Sigma = sigma_scale * Id) or provide a .meta sidecar");
  if (!(sigma_scale > 0.0)) sigma_scale = 1.0;

  Dataset fit_data = data;
  if (meta && meta->beta_star && meta->beta_star->size() == data.d()) fit_data.truth = meta->beta_star;
  const MethodFit fit =
      fit_method(method, fit_data, PsdMatrix::scaled_identity(data.d(), sigma_scale), s, method_seed(seed, method));

  const fs::path dir = out_dir(f, ".");
  json j;
  j["method"] = method;
  j["beta"] = std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
  if (fit_data.truth) j["error"] = (fit.beta - *fit_data.truth).norm();
  if (fit.trace) {
    write_trace_jsonl(*fit.trace, dir / "trace.jsonl");
    j["iterations"] = fit.trace->records.size();
    j["early_stopped"] = fit.trace->early_stopped;
  }
  write_json(j, dir / "fit.json");
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_bench(const CommonFlags& f) {
  ExperimentConfig cfg = ExperimentConfig::from_key_values(load_config(f));
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.threads > 1) cfg.threads = f.threads;
  if (!f.out.empty()) cfg.output_dir = f.out;
  cfg.validate();
  const ResultTable table = run_sweep(cfg);
  emit_outputs(table, cfg.output_dir, cfg.timing_in_results);
  int failures = 0;
  for (const auto& r : table.rows) failures += r.failure.empty() ? 0 : 1;
  std::cout << "wrote " << table.rows.size() << " rows to " << (cfg.output_dir / "results.csv").string() << " ("
            << failures << " failed)\n";
  return kOk;
}

int cmd_diagnose(const CommonFlags& f, const std::string& event) {
  const EventKind kind = parse_event(event);
  DiagnosticConfig cfg = DiagnosticConfig::reference(kind);
  ConfigReader r(load_config(f));
  cfg.gen.d = static_cast<Eigen::Index>(r.get_int("d", cfg.gen.d));
  cfg.K = static_cast<int>(r.get_int("K", cfg.K));
  const long long m = r.get_int("m", cfg.gen.n / cfg.K);
  cfg.gen.n = static_cast<Eigen::Index>(m) * cfg.K;
  cfg.gen.sigma = r.get_double("sigma", cfg.gen.sigma);
  cfg.gen.epsilon = r.get_double("epsilon", cfg.gen.epsilon);
  cfg.gen.attack = parse_attack(r.get_string("attack", attack_name(cfg.gen.attack)));
  cfg.gen.design = parse_design(r.get_string("design", design_name(cfg.gen.design)));
  cfg.gen.student_df = r.get_double("student_df", cfg.gen.student_df);
  cfg.num_dirs = static_cast<int>(r.get_int("num_dirs", cfg.num_dirs));
  cfg.trials = static_cast<int>(r.get_int("trials", cfg.trials));
  cfg.grid_size = static_cast<int>(r.get_int("grid_size", cfg.grid_size));
  cfg.grid_distance = r.get_double("grid_distance", cfg.grid_distance);
  cfg.calibration.samples = static_cast<Eigen::Index>(r.get_int("calibration_samples", cfg.calibration.samples));
  std::uint64_t seed = r.get_u64("seed", 0);
  r.finish();
  if (f.seed) seed = *f.seed;
  try {
    cfg.gen.validate();
    if (cfg.K < 1 || m < 1 || cfg.trials < 1 || cfg.num_dirs < 1 || cfg.grid_size < 1)
      throw Error(Errc::Config, "K, m, trials, num_dirs and grid_size must be positive");
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }

  Rng rng = make_rng(seed);
  const EventReport rep = run_diagnostic(cfg, rng);
  json j;
  j["event"] = rep.event;
  j["trials"] = rep.trials;
  j["passed"] = rep.passed;
  j["pass_fraction"] = rep.pass_fraction;
  j["worst_fraction"] = rep.worst_fraction;
  j["calibration"] = rep.calibration;
  j["config"] = {{"d", cfg.gen.d}, {"K", cfg.K}, {"m", m}, {"sigma", cfg.gen.sigma}, {"epsilon", cfg.gen.epsilon},
                 {"design", design_name(cfg.gen.design)}, {"seed", seed}};
  if (rep.sandwich_checked) j["sandwich_pass_fraction"] = rep.sandwich_pass_fraction;
  if (!f.out.empty()) write_json(j, out_dir(f, ".") / ("diagnose_" + rep.event + ".json"));
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust linear regression by spectral median-of-means descent"};
  app.require_subcommand(1);

  CommonFlags gen_flags, fit_flags, bench_flags, diag_flags;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (data.csv + data.meta)");
  add_common(gen, gen_flags);

  auto* fit = app.add_subcommand("fit", "fit one estimator to a CSV dataset");
  add_common(fit, fit_flags);
  std::string method = "spectral", data_path;
  fit->add_option("--method", method, "spectral | ols | huber | ransac | metric-mom")
      ->check(CLI::IsMember(known_methods()));
  fit->add_option("data", data_path, "dataset CSV (x0,...,x{d-1},y)")->required();

  auto* bench = app.add_subcommand("bench", "run a benchmark sweep");
  add_common(bench, bench_flags);

  auto* diag = app.add_subcommand("diagnose", "Monte-Carlo check of a block event");
  add_common(diag, diag_flags);
  std::string event;
  diag->add_option("--event", event, "multiplier | quadratic | init")
      ->required()
      ->check(CLI::IsMember({"multiplier", "quadratic", "init"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (fit->parsed()) return cmd_fit(fit_flags, method, data_path);
    if (bench->parsed()) return cmd_bench(bench_flags);
    if (diag->parsed()) return cmd_diagnose(diag_flags, event);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::Config ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
