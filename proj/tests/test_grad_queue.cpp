#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gradq/grad_queue.hpp"

using gradq::BoostConfig;
using gradq::GradBooster;
using gradq::GradQueue;
using gradq::QueueLengthController;

namespace {

GradQueue<double> scalar_queue(std::size_t cap, const std::vector<double>& xs) {
  GradQueue<double> q(cap);
  for (double x : xs) q.push(std::vector<double>{x});
  return q;
}

double scalar(const std::vector<double>& v) { return v.at(0); }

}  // namespace

TEST(GradQueue, EvictsOldestWhenFull) {
  auto q = scalar_queue(3, {1, 2, 3});
  q.push(std::vector<double>{4});
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(scalar(q.entries()[0]), 2);
  EXPECT_EQ(scalar(q.entries()[1]), 3);
  EXPECT_EQ(scalar(q.entries()[2]), 4);
}

TEST(GradQueue, FirstPushOnEmptyQueue) {
  auto q = scalar_queue(3, {7});
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(scalar(q.entries()[0]), 7);
}

TEST(GradQueue, RejectsDimensionChange) {
  auto q = scalar_queue(3, {1});
  EXPECT_THROW(q.push(std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_EQ(q.size(), 1u);
}

TEST(GradQueue, ZeroCapacityRejected) { EXPECT_THROW(GradQueue<double>(0), std::invalid_argument); }

TEST(GradQueue, StatsOfEmptyQueueThrow) {
  GradQueue<double> q(3);
  EXPECT_THROW(q.stats(), std::logic_error);
}

TEST(GradQueue, StatsOneTwoThree) {
  const auto st = scalar_queue(3, {1, 2, 3}).stats();
  EXPECT_DOUBLE_EQ(st.mean[0], 2.0);
  EXPECT_NEAR(st.std[0], 0.816496580927726, 1e-15);
  EXPECT_EQ(st.sample_count, 3u);
}

TEST(GradQueue, StatsOfRepeatedValueHaveZeroSpread) {
  const auto st = scalar_queue(3, {-0.7, -0.7, -0.7}).stats();
  EXPECT_DOUBLE_EQ(st.mean[0], -0.7);
  EXPECT_EQ(st.std[0], 0.0);
}

TEST(GradQueue, StatsFourOnesAndANine) {
  const auto st = scalar_queue(5, {1, 1, 1, 1, 9}).stats();
  EXPECT_DOUBLE_EQ(st.mean[0], 2.6);
  EXPECT_NEAR(st.std[0], 3.2, 1e-15);
}

TEST(GradQueue, StatsMatchBruteForcePerCoordinate) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(3.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cap = 2 + trial % 6, dim = 1 + trial % 4;
    GradQueue<double> q(cap);
    std::vector<std::vector<double>> kept;
    for (std::size_t s = 0; s < cap + 3; ++s) {
      std::vector<double> g(dim);
      for (auto& x : g) x = n(rng);
      q.push(g);
      kept.push_back(g);
    }
    kept.erase(kept.begin(), kept.end() - static_cast<long>(cap));
    const auto st = q.stats();
    for (std::size_t i = 0; i < dim; ++i) {
      long double mu = 0, var = 0;
      for (const auto& g : kept) mu += g[i];
      mu /= cap;
      for (const auto& g : kept) var += (g[i] - mu) * (g[i] - mu);
      var /= cap;
      EXPECT_NEAR(st.mean[i], static_cast<double>(mu), 1e-12 * std::abs(static_cast<double>(mu)) + 1e-15);
      EXPECT_NEAR(st.std[i], std::sqrt(static_cast<double>(var)), 1e-12 * std::sqrt(static_cast<double>(var)));
    }
  }
}

TEST(GradQueue, EffectiveLengthRestrictsStatsWindow) {
  auto q = scalar_queue(5, {100, 100, 1, 2, 3});
  q.set_effective_length(3);
  const auto st = q.stats();
  EXPECT_DOUBLE_EQ(st.mean[0], 2.0);
  EXPECT_EQ(st.sample_count, 3u);
  EXPECT_THROW(q.set_effective_length(6), std::invalid_argument);
}

TEST(DeltaRho, ClampsLargeDistanceAtRho) {
  const BoostConfig cfg{3.0};
  EXPECT_DOUBLE_EQ(gradq::delta_rho(5.0, 1.0, 1.0, cfg), 15.0);
}

TEST(DeltaRho, ZeroDistanceFloorsAtInverseRho) {
  const BoostConfig cfg{3.0};
  EXPECT_DOUBLE_EQ(gradq::delta_rho(2.0, 2.0, 0.5, cfg), 2.0 / 3.0);
}

TEST(DeltaRho, IdentityAtUnitDistance) {
  const BoostConfig cfg{3.0};
  EXPECT_DOUBLE_EQ(gradq::delta_rho(2.0, 1.0, 1.0, cfg), 2.0);
}

TEST(DeltaRho, ZeroSpreadRule) {
  const BoostConfig cfg{3.0, 1e-12};
  EXPECT_DOUBLE_EQ(gradq::delta_rho(-1.0, -1.0, 0.0, cfg), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(gradq::delta_rho(5.0, -1.0, 0.0, cfg), 15.0);
}

TEST(DeltaRho, ClampBoundsSignAndScaleEquivariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> rho_d(1.0, 6.0), sd(0.01, 4.0), cd(-5.0, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const BoostConfig cfg{rho_d(rng)};
    const double g = n(rng), mu = n(rng), s = sd(rng);
    const double out = gradq::delta_rho(g, mu, s, cfg);
    EXPECT_LE(std::abs(g) / cfg.rho, std::abs(out) * (1 + 1e-15));
    EXPECT_LE(std::abs(out), cfg.rho * std::abs(g) * (1 + 1e-15));
    if (g != 0.0) {
      EXPECT_EQ(std::signbit(out), std::signbit(g));
    }
    double c = cd(rng);
    if (c == 0.0) c = 1.0;
    const double scaled = gradq::delta_rho(c * g, c * mu, std::abs(c) * s, cfg);
    EXPECT_NEAR(scaled, c * out, 1e-12 * std::abs(c * out));
  }
}

TEST(DeltaRho, RhoOneIsIdentity) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 3.0);
  const BoostConfig cfg{1.0};
  for (int i = 0; i < 500; ++i) {
    const double g = n(rng);
    EXPECT_EQ(gradq::delta_rho(g, n(rng), std::abs(n(rng)), cfg), g);
  }
}

TEST(DeltaRho, DeviationShrinksAsRhoApproachesOne) {
  for (double delta : {1e-1, 1e-3, 1e-6}) {
    const BoostConfig cfg{1.0 + delta};
    for (double g : {-4.0, 0.3, 9.0}) {
      const double out = gradq::delta_rho(g, 0.1, 0.5, cfg);
      EXPECT_LE(std::abs(out - g), delta * std::abs(g) * (1 + 1e-12));
    }
  }
}

TEST(DeltaRho, LemmaTwoQueueShape) {
  for (std::size_t L : {3u, 4u, 5u, 8u, 17u}) {
    const auto st = scalar_queue(L, [&] {
                      std::vector<double> xs(L - 1, -1.3);
                      xs.push_back(4.0);
                      return xs;
                    }())
                        .stats();
    const double z = gradq::boost_distance(-1.3, st.mean[0], st.std[0], BoostConfig{});
    EXPECT_NEAR(z, 1.0 / std::sqrt(static_cast<double>(L - 1)), 1e-14);
  }
}

TEST(DeltaRho, RejectsRhoBelowOne) {
  EXPECT_THROW(BoostConfig{0.5}.validate(), std::invalid_argument);
  EXPECT_THROW((GradBooster<double>(3, BoostConfig{0.9})), std::invalid_argument);
}

TEST(DeltaRho, VectorFormIsElementwise) {
  auto q = GradQueue<double>(3);
  q.push(std::vector<double>{1, 0});
  q.push(std::vector<double>{2, 0});
  q.push(std::vector<double>{3, 0});
  const auto out = gradq::delta_rho(std::vector<double>{2, 5}, q.stats(), BoostConfig{3.0});
  EXPECT_DOUBLE_EQ(out[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(out[1], 15.0);
  EXPECT_THROW(gradq::delta_rho(std::vector<double>{1}, q.stats(), BoostConfig{}), std::invalid_argument);
}

TEST(GradBooster, IdentityDuringWarmup) {
  GradBooster<double> b(5, BoostConfig{3.0});
  EXPECT_EQ(b.warmup(), 3u);
  const std::vector<double> g{4.0};
  for (int i = 0; i < 3; ++i) {
    EXPECT_FALSE(b.active());
    EXPECT_EQ(b.boost(g)[0], 4.0);
    b.observe(std::vector<double>{1.0});
  }
  EXPECT_TRUE(b.active());
  EXPECT_DOUBLE_EQ(b.boost(g)[0], 12.0);
}

TEST(GradBooster, WarmupCappedByCapacity) {
  GradBooster<double> b(2, BoostConfig{});
  EXPECT_EQ(b.warmup(), 2u);
  EXPECT_THROW((GradBooster<double>(2, BoostConfig{}, 3)), std::invalid_argument);
}

TEST(QueueLengthController, SlidingRuleExample) {
  QueueLengthController c(2, 2, 5);
  for (double l : {5, 5, 5, 4, 3, 2, 1}) c.push_loss(l);
  EXPECT_EQ(c.effective_length(), 5u);
}

TEST(QueueLengthController, CountsStrictIncreasesOnly) {
  // Backward sums: 3, 5, 6, 6 -> two increases, then a tie stops the count.
  QueueLengthController c(2, 1, 9);
  for (double l : {3.0, 3.0, 3.0, 3.0, 2.0, 1.0}) c.push_loss(l);
  EXPECT_EQ(c.effective_length(), 3u);
}

TEST(QueueLengthController, FlatLossStaysAtMinimum) {
  QueueLengthController c(2, 3, 5);
  for (int i = 0; i < 4; ++i) c.push_loss(3.0);
  EXPECT_EQ(c.effective_length(), 3u);
}

TEST(QueueLengthController, TooFewLossesGiveMinimum) {
  QueueLengthController c(3, 2, 5);
  EXPECT_EQ(c.effective_length(), 2u);
  c.push_loss(9.0);
  c.push_loss(1.0);
  EXPECT_EQ(c.effective_length(), 2u);
}

TEST(QueueLengthController, HistoryIsBounded) {
  QueueLengthController c(2, 3, 5);
  for (int i = 0; i < 100; ++i) c.push_loss(100.0 - i);
  EXPECT_EQ(c.history().size(), 7u);
  EXPECT_EQ(c.effective_length(), 5u);
}

TEST(QueueLengthController, RejectsBadBounds) {
  EXPECT_THROW(QueueLengthController(0, 3, 5), std::invalid_argument);
  EXPECT_THROW(QueueLengthController(2, 6, 5), std::invalid_argument);
  EXPECT_THROW(QueueLengthController(2, 0, 5), std::invalid_argument);
}
