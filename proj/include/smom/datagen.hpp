#pragma once

// Synthetic heavy-tailed regression data and the large-value attacks used in
// the benchmarks.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "smom/dataset.hpp"
#include "smom/error.hpp"
#include "smom/linalg.hpp"
#include "smom/rng.hpp"

namespace smom {

enum class AttackKind { CoordAdd, CoordMul, RespZero, RespHuge, Mixed };

inline const char* attack_name(AttackKind a) {
  switch (a) {
    case AttackKind::CoordAdd: return "coord-add";
    case AttackKind::CoordMul: return "coord-mul";
    case AttackKind::RespZero: return "resp-zero";
    case AttackKind::RespHuge: return "resp-huge";
    case AttackKind::Mixed: return "mixed";
  }
  return "unknown";
}

inline AttackKind parse_attack(const std::string& s) {
  for (AttackKind a : {AttackKind::CoordAdd, AttackKind::CoordMul, AttackKind::RespZero, AttackKind::RespHuge,
                       AttackKind::Mixed})
    if (s == attack_name(a)) return a;
  throw Error(Errc::Config, "unknown attack '" + s + "'");
}

/// Per-coordinate independent t draws, one shared chi-square scale per row,
/// or standard Gaussian rows with Gaussian noise (light-tailed reference).
enum class TDesign { Independent, Elliptical, Gaussian };

inline const char* design_name(TDesign t) {
  switch (t) {
    case TDesign::Independent: return "independent";
    case TDesign::Elliptical: return "elliptical";
    case TDesign::Gaussian: return "gaussian";
  }
  return "unknown";
}

inline TDesign parse_design(const std::string& s) {
  for (TDesign t : {TDesign::Independent, TDesign::Elliptical, TDesign::Gaussian})
    if (s == design_name(t)) return t;
  throw Error(Errc::Config, "unknown design '" + s + "'");
}

inline constexpr double kAttackMagnitude = 1e9;

struct GenSpec {
  Eigen::Index n = 1000;
  Eigen::Index d = 10;
  double sigma = 1.0;  // inverse signal-to-noise ratio
  double student_df = 3.0;
  double epsilon = 0.0;
  AttackKind attack = AttackKind::Mixed;
  TDesign design = TDesign::Independent;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1 || d < 1) throw Error(Errc::Config, "n and d must be positive");
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error(Errc::Config, "epsilon must lie in [0, 1/2)");
    if (!(sigma >= 0.0)) throw Error(Errc::Config, "sigma must be >= 0");
    if (!(student_df > 2.0)) throw Error(Errc::Config, "student_df must be > 2");
  }

  /// E[X X^T] of the generated design: df/(df-2) * Id for the t designs, Id otherwise.
  PsdMatrix second_moment() const {
    if (design == TDesign::Gaussian) return PsdMatrix::identity(d);
    return PsdMatrix::scaled_identity(d, student_df / (student_df - 2.0));
  }
};

/// Rows i.i.d. from the chosen design, y = <1, x> + sigma * xi with xi ~ t(df)
/// (standard normal for the Gaussian design).
inline Dataset generate_clean(const GenSpec& spec, Rng& rng) {
  spec.validate();
  std::student_t_distribution<double> t(spec.student_df);
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(spec.student_df);
  Dataset data;
  data.X.resize(spec.n, spec.d);
  data.y.resize(spec.n);
  const Vector beta_star = Vector::Ones(spec.d);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    if (spec.design == TDesign::Independent) {
      for (Eigen::Index j = 0; j < spec.d; ++j) data.X(i, j) = t(rng);
    } else if (spec.design == TDesign::Gaussian) {
      for (Eigen::Index j = 0; j < spec.d; ++j) data.X(i, j) = normal(rng);
    } else {
      for (Eigen::Index j = 0; j < spec.d; ++j) data.X(i, j) = normal(rng);
      const double w = chi2(rng) / spec.student_df;
      data.X.row(i) /= std::sqrt(w);
    }
    const double xi = spec.design == TDesign::Gaussian ? normal(rng) : t(rng);
    data.y[i] = data.X.row(i).dot(beta_star);
    if (spec.sigma > 0.0) data.y[i] += spec.sigma * xi;
  }
  data.truth = beta_star;
  data.outlier_mask = std::vector<bool>(static_cast<std::size_t>(spec.n), false);
  return data;
}

inline Eigen::Index contamination_count(double epsilon, Eigen::Index n) {
  return static_cast<Eigen::Index>(std::floor(epsilon * static_cast<double>(n) + 1e-9));
}

/// Corrupts floor(epsilon N) uniformly chosen rows and flags them in the mask.
/// Coordinate attacks hit a random ceil(d/4)-subset of coordinates per row;
/// the mixed attack assigns the four kinds round-robin in selection order.
inline Dataset contaminate(const Dataset& clean, double epsilon, AttackKind attack, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error(Errc::Config, "epsilon must lie in [0, 1/2)");
  clean.validate();
  Dataset data = clean;
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  if (!data.outlier_mask) data.outlier_mask = std::vector<bool>(static_cast<std::size_t>(n), false);
  const Eigen::Index count = contamination_count(epsilon, n);
  if (count == 0) return data;

  // Partial Fisher-Yates: the first `count` slots are the corrupted rows.
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(d));
  const Eigen::Index hit = (d + 3) / 4;
  for (Eigen::Index c = 0; c < count; ++c) {
    const Eigen::Index i = rows[static_cast<std::size_t>(c)];
    AttackKind kind = attack;
    if (attack == AttackKind::Mixed) kind = static_cast<AttackKind>(c % 4);
    if (kind == AttackKind::CoordAdd || kind == AttackKind::CoordMul) {
      std::iota(coords.begin(), coords.end(), Eigen::Index{0});
      for (Eigen::Index j = 0; j < hit; ++j) {
        std::uniform_int_distribution<Eigen::Index> pick(j, d - 1);
        std::swap(coords[static_cast<std::size_t>(j)], coords[static_cast<std::size_t>(pick(rng))]);
        const Eigen::Index col = coords[static_cast<std::size_t>(j)];
        if (kind == AttackKind::CoordAdd)
          data.X(i, col) += kAttackMagnitude;
        else
          data.X(i, col) *= kAttackMagnitude;
      }
    } else if (kind == AttackKind::RespZero) {
      data.y[i] = 0.0;
    } else {
      data.y[i] = kAttackMagnitude;
    }
    (*data.outlier_mask)[static_cast<std::size_t>(i)] = true;
  }
  return data;
}

/// Clean draw followed by contamination, both from `spec.seed`.
inline Dataset generate(const GenSpec& spec) {
  Rng rng = make_rng(spec.seed);
  Dataset clean = generate_clean(spec, rng);
  return contaminate(clean, spec.epsilon, spec.attack, rng);
}

inline DatasetMeta make_meta(const GenSpec& spec) {
  DatasetMeta m;
  m.d = spec.d;
  m.n = spec.n;
  m.sigma = spec.sigma;
  m.epsilon = spec.epsilon;
  m.seed = spec.seed;
  m.beta_star = Vector::Ones(spec.d);
  m.extra["attack"] = attack_name(spec.attack);
  m.extra["design"] = design_name(spec.design);
  m.extra["student_df"] = format_double(spec.student_df);
  m.extra["attack_coords"] = "ceil(d/4) random coordinates per row";
  m.extra["attack_mix"] = "round-robin coord-add, coord-mul, resp-zero, resp-huge";
  m.extra["second_moment_scale"] = format_double(spec.second_moment().matrix()(0, 0));
  m.extra["outliers"] = std::to_string(contamination_count(spec.epsilon, spec.n));
  return m;
}

}  // namespace smom
