#include <gtest/gtest.h>

#include <sstream>

#include "json.hpp"
#include "smom/datagen.hpp"
#include "smom/descent.hpp"
#include "test_util.hpp"

using namespace smom;

namespace {

BlockVectors from_pruned(const RowMatrix& rows) {
  BlockVectors bv;
  bv.raw = rows;
  bv.pruned = rows;
  for (Eigen::Index k = 0; k < rows.rows(); ++k) {
    bv.kept_indices.push_back(static_cast<int>(k));
    bv.radius = std::max(bv.radius, rows.row(k).norm());
  }
  return bv;
}

Dataset noiseless_gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  GenSpec g;
  g.n = n;
  g.d = d;
  g.sigma = 0.0;
  g.design = TDesign::Gaussian;
  g.seed = seed;
  return generate(g);
}

DescentConfig analysis_config(int K) {
  DescentConfig c;
  c.K = K;
  return c;
}

}  // namespace

TEST(DescentConfig, Validation) {
  DescentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.K = 9;
  EXPECT_THROW(c.validate(), Error);
  c = DescentConfig{};
  c.step_scale = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = DescentConfig{};
  c.T_des = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(DescentConfig::practical(40).validate());
}

TEST(DescentConfig, Budgets) {
  DescentConfig c;
  c.K = 40;
  EXPECT_EQ(c.bisection_count(), 6);
  EXPECT_EQ(c.mwu_budget(36, 1.0, 0.5), analysis_mwu_iterations(36, 40));
  c.mwu_T = 7;
  EXPECT_EQ(c.mwu_budget(36, 1.0, 0.5), 7);
  c.mwu_radius_padding = true;
  EXPECT_EQ(c.mwu_budget(36, 8.0, 1.0), 7 + 6);
  EXPECT_EQ(c.mwu_budget(36, 0.5, 1.0), 7);
  c.mwu_T = 0;
  c.mwu_radius_padding = false;
  c.budget_rule = MwuBudget::DataDependent;
  c.mwu_T_max = 5;
  EXPECT_EQ(c.mwu_budget(36, 100.0, 1.0), 5);
}

TEST(StepSize, ZeroAtTheTruth) {
  const Dataset data = noiseless_gaussian(400, 3, 1);
  const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(3));
  Rng rng = make_rng(2);
  EXPECT_EQ(step_size(data, *data.truth, spec, analysis_config(20), rng), 0.0);
}

TEST(StepSize, PositivelyHomogeneousInTheBlocks) {
  Rng gen = make_rng(12);
  for (DescentConfig cfg : {analysis_config(20), DescentConfig::practical(20)}) {
    for (int rep = 0; rep < 10; ++rep) {
      RowMatrix z = testutil::gaussian_rows(18, 4, gen);
      z.col(0).array() += 2.0;
      for (double c : {4.0, 0.125}) {
        Rng a = make_rng(static_cast<std::uint64_t>(rep)), b = make_rng(static_cast<std::uint64_t>(rep));
        const StepSearch s0 = search_step_size(from_pruned(z), cfg, a);
        const StepSearch s1 = search_step_size(from_pruned(c * z), cfg, b);
        EXPECT_EQ(s1.step, c * s0.step) << "rep " << rep;
        EXPECT_GT(s0.step, 0.0);
      }
    }
  }
}

// Noiseless, well aligned, |beta_c - beta*|_Sigma = 1: the bisected step
// lies in the range given by the convergence proof.
TEST(StepSize, WithinTheoreticalRange) {
  for (int seed = 0; seed < 50; ++seed) {
    const Dataset data = noiseless_gaussian(2000, 5, 500 + static_cast<std::uint64_t>(seed));
    const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(5));
    Vector beta_c = *data.truth;
    beta_c[0] -= 1.0;
    Rng rng = make_rng(static_cast<std::uint64_t>(seed));
    const double d_t = step_size(data, beta_c, spec, analysis_config(20), rng);
    EXPECT_GE(d_t, 9.6e-4) << "seed " << seed;
    EXPECT_LE(d_t, 2.0e-2) << "seed " << seed;
  }
}

TEST(DescentDirection, OneDimensionalAlignment) {
  const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(3));
  RowMatrix z = RowMatrix::Zero(18, 3);
  z.col(0).setConstant(2.5);
  const DescentConfig cfg = analysis_config(20);
  Rng rng = make_rng(3);
  const DirectionSearch ds = search_direction(from_pruned(z), spec, cfg, 2.0 * cfg.step_scale, rng);
  ASSERT_TRUE(ds.g.has_value());
  EXPECT_NEAR(std::abs((*ds.g)[0]), 1.0, 1e-9);
  // u follows the blocks, g points the other way.
  EXPECT_LT((*ds.g)[0], 0.0);
}

TEST(DescentDirection, UnitSigmaNorm) {
  Rng gen = make_rng(44);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix sigma = testutil::random_spd(4, gen, 0.2, 5.0);
    const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix(sigma));
    RowMatrix z = testutil::gaussian_rows(27, 4, gen);
    z.col(2).array() += 3.0;
    const DescentConfig cfg = analysis_config(30);
    Rng rng = make_rng(static_cast<std::uint64_t>(rep));
    const DirectionSearch ds = search_direction(from_pruned(z), spec, cfg, 1.0 * cfg.step_scale, rng);
    ASSERT_TRUE(ds.g.has_value()) << "rep " << rep;
    EXPECT_NEAR(spec.norm(*ds.g), 1.0, 1e-10);
  }
}

TEST(DescentDirection, GoodDirectionMargin) {
  const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(5));
  const DescentConfig cfg = analysis_config(20);
  int good = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const Dataset data = noiseless_gaussian(2000, 5, 900 + static_cast<std::uint64_t>(seed));
    Vector beta_c = *data.truth;
    beta_c[0] += 1.0;  // beta_c - beta* = e1
    Rng rng = make_rng(static_cast<std::uint64_t>(seed));
    const double theta = step_size(data, beta_c, spec, cfg, rng);
    if (!(theta > 0.0)) continue;
    try {
      const Vector g = descent_direction(data, beta_c, spec, cfg, theta, rng);
      good += g[0] >= 2.0 / 100.0 ? 1 : 0;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::DirectionSearchFailed);
    }
  }
  EXPECT_GE(good, 95);
}

TEST(DescentDirection, FailureThrows) {
  const Dataset data = noiseless_gaussian(400, 3, 5);
  const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(3));
  Vector beta_c = *data.truth;
  beta_c[1] += 1.0;
  Rng rng = make_rng(1);
  // A margin far beyond any block norm cannot be certified.
  try {
    descent_direction(data, beta_c, spec, analysis_config(20), 1e6, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DirectionSearchFailed);
  }
}

TEST(RobustRegression, ZeroTruthStopsMoving) {
  Rng gen = make_rng(8);
  Dataset data;
  data.X = testutil::gaussian_rows(500, 4, gen);
  data.y = Vector::Zero(500);
  data.truth = Vector::Zero(4);
  DescentConfig cfg = analysis_config(20);
  cfg.T_des = 3;
  const FitResult fit = robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(4)), cfg);
  EXPECT_EQ(fit.beta_hat, Vector::Zero(4));
  ASSERT_EQ(fit.trace.records.size(), 3u);
  EXPECT_EQ(fit.trace.records[0].step, 0.0);
  EXPECT_EQ(fit.trace.records[0].status, IterStatus::ZeroStep);
}

TEST(RobustRegression, UpdateIdentityAndSkips) {
  GenSpec g;
  g.n = 3000;
  g.d = 6;
  g.seed = 4;
  g.epsilon = 0.01;
  const Dataset data = generate(g);
  const ProblemSpec spec = ProblemSpec::from_sigma(g.second_moment());
  DescentConfig cfg = DescentConfig::practical(30);
  cfg.T_des = 25;
  cfg.seed = 5;
  const FitResult fit = robust_regression(data, spec, cfg);
  const auto& recs = fit.trace.records;
  for (std::size_t t = 0; t < recs.size(); ++t) {
    const Vector next = t + 1 < recs.size() ? recs[t + 1].beta : fit.beta_hat;
    EXPECT_EQ(next, recs[t].beta - recs[t].step * recs[t].direction) << "iteration " << t;
    EXPECT_LE((next + recs[t].step * recs[t].direction - recs[t].beta).norm(), 1e-12 * (1 + recs[t].beta.norm()));
    if (recs[t].status != IterStatus::Success) {
      EXPECT_EQ(next, recs[t].beta);
      EXPECT_EQ(recs[t].step, 0.0);
    } else {
      EXPECT_NEAR(spec.norm(recs[t].direction), 1.0, 1e-10);
    }
    ASSERT_TRUE(recs[t].dist_to_truth.has_value());
    EXPECT_NEAR(*recs[t].dist_to_truth, spec.norm(next - *data.truth), 1e-12);
  }
}

TEST(RobustRegression, ScaleEquivariance) {
  const Dataset data = noiseless_gaussian(1000, 4, 6);
  DescentConfig cfg = DescentConfig::practical(20);
  cfg.T_des = 15;
  cfg.seed = 3;
  const FitResult base = robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(4)), cfg);
  for (double c : {2.0, 3.0}) {
    Dataset scaled = data;
    scaled.X *= c;
    scaled.truth = *data.truth / c;
    const FitResult s = robust_regression(scaled, ProblemSpec::from_sigma(PsdMatrix::scaled_identity(4, c * c)), cfg);
    ASSERT_EQ(s.trace.records.size(), base.trace.records.size());
    for (std::size_t t = 0; t < base.trace.records.size(); ++t)
      EXPECT_LE((s.trace.records[t].beta - base.trace.records[t].beta / c).cwiseAbs().maxCoeff(), 1e-8)
          << "c=" << c << " t=" << t;
    EXPECT_LE((s.beta_hat - base.beta_hat / c).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(RobustRegression, Deterministic) {
  GenSpec g;
  g.n = 2000;
  g.d = 5;
  g.seed = 10;
  const Dataset data = generate(g);
  const ProblemSpec spec = ProblemSpec::from_sigma(g.second_moment());
  DescentConfig cfg = DescentConfig::practical(20);
  cfg.T_des = 10;
  cfg.seed = 77;
  const FitResult a = robust_regression(data, spec, cfg);
  const FitResult b = robust_regression(data, spec, cfg);
  ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
  for (std::size_t t = 0; t < a.trace.records.size(); ++t) {
    EXPECT_EQ(a.trace.records[t].beta, b.trace.records[t].beta);
    EXPECT_EQ(a.trace.records[t].step, b.trace.records[t].step);
    EXPECT_EQ(a.trace.records[t].theta, b.trace.records[t].theta);
  }
  EXPECT_EQ(a.beta_hat, b.beta_hat);
}

TEST(RobustRegression, NoiselessDistanceContracts) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = noiseless_gaussian(2000, 5, 40 + seed);
    const ProblemSpec spec = ProblemSpec::from_sigma(PsdMatrix::identity(5));
    DescentConfig cfg = DescentConfig::practical(20);
    cfg.T_des = 200;
    cfg.seed = seed;
    const FitResult fit = robust_regression(data, spec, cfg);
    const std::vector<double> dist = fit.trace.distances();
    const double plateau = dist.back();
    int steps = 0, decreasing = 0;
    bool below = false;
    for (std::size_t t = 0; t + 1 < dist.size(); ++t) {
      if (dist[t] <= plateau * 1.02) below = true;
      if (below) {
        EXPECT_LE(dist[t + 1], 1.02 * std::max(plateau, dist[t])) << "seed " << seed << " t " << t;
        continue;
      }
      ++steps;
      decreasing += dist[t + 1] <= dist[t] ? 1 : 0;
    }
    EXPECT_GE(decreasing, 0.95 * steps) << "seed " << seed;
    EXPECT_LE(dist.back(), 1e-3 * spec.norm(*data.truth)) << "seed " << seed;
  }
}

TEST(RobustRegression, EarlyStopIsRecorded) {
  const Dataset data = noiseless_gaussian(1000, 3, 12);
  DescentConfig cfg = DescentConfig::practical(20);
  cfg.T_des = 500;
  cfg.early_stop_rel = 1e-6;
  cfg.early_stop_abs = 1e-9;
  const FitResult fit = robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(3)), cfg);
  EXPECT_TRUE(fit.trace.early_stopped);
  EXPECT_LT(fit.trace.records.size(), 500u);
}

TEST(RobustRegression, InputErrors) {
  const Dataset data = noiseless_gaussian(100, 3, 1);
  DescentConfig cfg = analysis_config(20);
  EXPECT_THROW(robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(4)), cfg), Error);
  cfg.K = 200;
  EXPECT_THROW(robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(3)), cfg), Error);
  cfg.K = 20;
  cfg.warm_start = Vector::Zero(2);
  EXPECT_THROW(robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(3)), cfg), Error);
}

TEST(Trace, JsonLinesKeys) {
  const Dataset data = noiseless_gaussian(600, 3, 2);
  DescentConfig cfg = DescentConfig::practical(20);
  cfg.T_des = 4;
  const FitResult fit = robust_regression(data, ProblemSpec::from_sigma(PsdMatrix::identity(3)), cfg);
  std::ostringstream os;
  write_trace_jsonl(fit.trace, os);
  std::istringstream is(os.str());
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("iter").get<int>(), n);
    for (const char* key : {"theta", "step", "dist_to_truth", "mwu_status", "wall_ms"})
      EXPECT_TRUE(j.contains(key)) << key;
    ++n;
  }
  EXPECT_EQ(n, 4);
}
