#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "smom/mwu.hpp"
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

// 80% of the blocks along e1 with margin >= theta plus small noise, 20%
// orthogonal spikes that dominate the quadratic form.
BlockVectors aligned_with_spikes(int kept, int d, double theta, Rng& rng) {
  std::normal_distribution<double> n;
  RowMatrix z = RowMatrix::Zero(kept, d);
  const int good = (4 * kept) / 5;
  for (int k = 0; k < kept; ++k) {
    if (k < good) {
      z(k, 0) = theta * (1.2 + 0.1 * std::abs(n(rng)));
      for (int j = 1; j < d; ++j) z(k, j) = 0.05 * theta * n(rng);
    } else {
      const int axis = 1 + (k % (d - 1));
      z(k, axis) = 3.0 * theta * (n(rng) > 0 ? 1.0 : -1.0);
    }
  }
  return from_pruned(z);
}

}  // namespace

TEST(KlProject, UniformUnchanged) {
  const std::vector<double> w(8, 0.125);
  for (double cap : {0.125, 0.2, 1.0}) {
    const WeightVector p = kl_project_capped(w, cap);
    for (double x : p.w) EXPECT_DOUBLE_EQ(x, 0.125);
  }
}

TEST(KlProject, WorkedExamplesAgainstConvexOracle) {
  const std::vector<double> a = {0.7, 0.2, 0.1};
  const WeightVector pa = kl_project_capped(a, 0.5);
  const std::vector<double> oa = testutil::kl_projection_oracle(a, 0.5);
  const std::vector<double> expect_a = {0.5, 1.0 / 3.0, 1.0 / 6.0};
  const std::vector<double> b = {0.9, 0.05, 0.05};
  const WeightVector pb = kl_project_capped(b, 0.4);
  const std::vector<double> ob = testutil::kl_projection_oracle(b, 0.4);
  const std::vector<double> expect_b = {0.4, 0.3, 0.3};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(pa.w[i], expect_a[i], 1e-12);
    EXPECT_NEAR(oa[i], expect_a[i], 1e-8);
    EXPECT_NEAR(pb.w[i], expect_b[i], 1e-12);
    EXPECT_NEAR(ob[i], expect_b[i], 1e-8);
  }
}

TEST(KlProject, MatchesConvexOracleOnRandomInstances) {
  Rng rng = make_rng(101);
  std::uniform_int_distribution<int> sized(2, 10);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = sized(rng);
    std::vector<double> w(static_cast<std::size_t>(n));
    double s = 0;
    for (double& x : w) s += (x = std::pow(ex(rng), 2.0) + 1e-3);
    for (double& x : w) x /= s;
    const double cap = (1.0 + u(rng) * (n - 1.0)) / n;  // in [1/n, 1]
    const WeightVector p = kl_project_capped(w, cap);
    const std::vector<double> o = testutil::kl_projection_oracle(w, cap);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(p.w[i], o[i], 1e-8) << "instance " << inst;
  }
}

TEST(KlProject, Infeasible) {
  EXPECT_THROW(kl_project_capped(std::vector<double>{0.5, 0.5, 0.0}, 0.4), Error);
  EXPECT_THROW(kl_project_capped(std::vector<double>{}, 0.4), Error);
  EXPECT_THROW(kl_project_capped(std::vector<double>{0.5, -0.1, 0.6}, 1.0), Error);
}

TEST(RequiredMarginCount, CeilFortyPercent) {
  for (int k = 1; k < 500; ++k) EXPECT_EQ(required_margin_count(k), static_cast<int>(std::ceil(0.4 * k - 1e-12)));
}

TEST(Round, SingleDirectionAcceptsThePositiveSign) {
  const double theta = 1.0;
  RowMatrix z = RowMatrix::Zero(18, 3);
  z.col(0).setConstant(theta);
  Matrix dirs = Matrix::Zero(3, 1);
  dirs(0, 0) = 1.0;
  int ok = 0;
  for (int seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed));
    const DirectionResult r = round_directions(z, theta, dirs, 50, rng);
    if (r.ok()) {
      ++ok;
      EXPECT_NEAR(r.direction->vec()[0], 1.0, 1e-12);
      EXPECT_EQ(r.margin_count, 18);
    }
  }
  EXPECT_GE(ok, 198);
}

TEST(Round, ZeroBlocksFail) {
  Matrix dirs = Matrix::Identity(2, 2);
  Rng rng = make_rng(1);
  const DirectionResult r = round_directions(RowMatrix::Zero(9, 2), 1.0, dirs, 30, rng);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.trials_used, 30);
}

TEST(Round, AcceptedDirectionLeansOnTheAlignedAxis) {
  RowMatrix z = RowMatrix::Zero(20, 2);
  z.col(0).setConstant(1.0);
  const Matrix dirs = Matrix::Identity(2, 2);
  int accepted = 0;
  for (int seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed));
    const DirectionResult r = round_directions(z, 1.0, dirs, 50, rng);
    ASSERT_TRUE(r.ok());
    ++accepted;
    // Acceptance needs <u, e1> > theta/10 / |Z_k| = 0.1.
    EXPECT_GT(r.direction->vec()[0], 0.1);
  }
  EXPECT_EQ(accepted, 200);
}

TEST(Round, Preconditions) {
  Rng rng = make_rng(1);
  EXPECT_THROW(round_directions(RowMatrix::Ones(9, 2), 1.0, Matrix(2, 0), 5, rng), Error);
  EXPECT_THROW(round_directions(RowMatrix::Ones(9, 2), 1.0, Matrix::Identity(3, 3), 5, rng), Error);
  EXPECT_THROW(round_directions(RowMatrix::Ones(9, 2), 1.0, Matrix::Identity(2, 2), 0, rng), Error);
}

TEST(Bregman, PerfectAlignment) {
  const double theta = 0.7;
  RowMatrix z = RowMatrix::Zero(27, 4);
  z.col(0).setConstant(theta);
  Rng rng = make_rng(5);
  const DirectionResult r = bregman_regression(from_pruned(z), theta, 20, rng);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.margin_count, 27);
  EXPECT_NEAR(std::abs(r.direction->vec()[0]), 1.0, 1e-9);
}

TEST(Bregman, AllZeroFails) {
  Rng rng = make_rng(5);
  EXPECT_FALSE(bregman_regression(from_pruned(RowMatrix::Zero(18, 3)), 1.0, 10, rng).ok());
}

TEST(Bregman, Preconditions) {
  Rng rng = make_rng(5);
  const BlockVectors bv = from_pruned(RowMatrix::Ones(18, 3));
  EXPECT_THROW(bregman_regression(bv, 0.0, 10, rng), Error);
  EXPECT_THROW(bregman_regression(bv, 1.0, 0, rng), Error);
}

TEST(Bregman, RecoversAlignedMajorityDespiteSpikes) {
  const int kept = 18;
  const double theta = 1.0;
  const int T = 6 * static_cast<int>(std::ceil(std::log(static_cast<double>(kept)))) * kept;
  int ok = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng gen = make_rng(static_cast<std::uint64_t>(10'000 + seed));
    const BlockVectors bv = aligned_with_spikes(kept, 5, theta, gen);
    Rng rng = make_rng(static_cast<std::uint64_t>(seed));
    const DirectionResult r = bregman_regression(bv, theta, T, rng);
    if (!r.ok()) continue;
    // Success condition checked from the returned direction, not the report.
    if (count_margin(bv.pruned, r.direction->vec(), theta) >= required_margin_count(kept)) ++ok;
  }
  EXPECT_GE(ok, 95);
}

TEST(Bregman, WeightsStayOnCappedSimplex) {
  Rng gen = make_rng(77);
  for (ScoreScale scale : {ScoreScale::Radius, ScoreScale::IterationMax, ScoreScale::Margin}) {
    for (int rep = 0; rep < 10; ++rep) {
      const RowMatrix z = testutil::gaussian_rows(36, 4, gen);
      const BlockVectors bv = from_pruned(z);
      const double cap = 1.0 / (0.8 * 36);
      int calls = 0;
      MwuOptions opts;
      opts.score_scale = scale;
      opts.on_iteration = [&](int, std::span<const double> w, double total) {
        ++calls;
        double s = 0;
        for (double x : w) {
          EXPECT_GE(x, 0.0);
          EXPECT_LE(x, cap * (1 + 1e-12));
          s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        // The weights entering the update sum to one.
        EXPECT_LE(total, 1.0 + 1e-12);
        EXPECT_GE(total, 0.5 - 1e-12);
      };
      Rng rng = make_rng(static_cast<std::uint64_t>(rep));
      bregman_regression(bv, 0.5, 40, rng, opts);
      EXPECT_EQ(calls, 40);
    }
  }
}

TEST(Bregman, ReportedMarginMatchesRecount) {
  Rng gen = make_rng(91);
  int successes = 0;
  for (int rep = 0; rep < 60; ++rep) {
    RowMatrix z = testutil::gaussian_rows(27, 3, gen);
    z.col(0).array() += 0.8;
    const BlockVectors bv = from_pruned(z);
    for (bool early : {false, true}) {
      MwuOptions opts;
      opts.early_accept = early;
      Rng rng = make_rng(static_cast<std::uint64_t>(rep));
      const DirectionResult r = bregman_regression(bv, 1.0, 30, rng, opts);
      if (!r.ok()) continue;
      ++successes;
      EXPECT_EQ(r.margin_count, count_margin(bv.pruned, r.direction->vec(), 1.0));
      EXPECT_GE(r.margin_count, required_margin_count(27));
    }
  }
  EXPECT_GT(successes, 0);
}

// Exhaustive net over the circle certifies that no direction clears the
// margin on enough blocks; the search must then fail every time.
TEST(Bregman, SoundnessOnCertifiedInfeasibleInstances) {
  Rng gen = make_rng(2718);
  std::normal_distribution<double> n;
  int certified = 0;
  for (int inst = 0; inst < 40; ++inst) {
    const int kept = 18;
    RowMatrix z(kept, 2);
    // Blocks spread evenly around the circle: any half-plane holds about half of them.
    for (int k = 0; k < kept; ++k) {
      const double a = 2 * std::numbers::pi * (k + 0.3 * n(gen)) / kept;
      const double r = 1.0 + 0.2 * std::abs(n(gen));
      z(k, 0) = r * std::cos(a);
      z(k, 1) = r * std::sin(a);
    }
    const double theta = 10.0 * (0.5 + 0.4 * std::abs(n(gen)));
    const int need = required_margin_count(kept);
    int best = 0;
    for (int j = 0; j < 10000; ++j) {
      const double a = 2 * std::numbers::pi * j / 10000.0;
      Vector u(2);
      u << std::cos(a), std::sin(a);
      best = std::max(best, count_margin(z, u, theta));
    }
    if (best >= need) continue;
    ++certified;
    const BlockVectors bv = from_pruned(z);
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng = make_rng(static_cast<std::uint64_t>(seed));
      MwuOptions opts;
      opts.early_accept = seed % 2 == 1;
      EXPECT_FALSE(bregman_regression(bv, theta, 30, rng, opts).ok()) << "instance " << inst;
    }
  }
  EXPECT_GE(certified, 20);
}

TEST(Bregman, DeterministicGivenSeed) {
  Rng gen = make_rng(3);
  RowMatrix z = testutil::gaussian_rows(27, 4, gen);
  z.col(1).array() += 1.0;
  const BlockVectors bv = from_pruned(z);
  Rng a = make_rng(8), b = make_rng(8);
  const DirectionResult ra = bregman_regression(bv, 1.0, 25, a);
  const DirectionResult rb = bregman_regression(bv, 1.0, 25, b);
  ASSERT_EQ(ra.ok(), rb.ok());
  if (ra.ok()) EXPECT_EQ(ra.direction->vec(), rb.direction->vec());
}

TEST(Bregman, EarlyRejectNeverDropsAFeasibleAlignedInstance) {
  RowMatrix z = RowMatrix::Zero(27, 3);
  z.col(0).setConstant(0.2);
  MwuOptions opts;
  opts.early_reject = true;
  Rng rng = make_rng(4);
  // Margin theta/10 = 0.1 < 0.2 on every block.
  EXPECT_TRUE(bregman_regression(from_pruned(z), 1.0, 10, rng, opts).ok());
}

TEST(MwuBudgets, Formulas) {
  EXPECT_EQ(analysis_mwu_iterations(36, 40), static_cast<int>(std::ceil(6 * std::log(36.0) * 40)));
  EXPECT_EQ(data_dependent_mwu_iterations(36, 2.0, 1.0), static_cast<int>(std::ceil(2 * std::log(36.0) * 4)));
  EXPECT_EQ(data_dependent_mwu_iterations(36, 1e300, 1e-300), 1'000'000'000);
}
