#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gradq/cluster_boost.hpp"

using gradq::FeatureMatrix;

namespace {

FeatureMatrix random_points(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMatrix x(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto& v : x.row(r)) v = n(rng);
  return x;
}

// Brute force over every labelling with k non-empty groups.
double exhaustive_optimum(const FeatureMatrix& x, std::size_t k) {
  const std::size_t n = x.rows(), d = x.cols();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> lab(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (auto& l : lab) {
      l = c % k;
      c /= k;
    }
    std::vector<std::vector<double>> sum(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++cnt[lab[i]];
      for (std::size_t j = 0; j < d; ++j) sum[lab[i]][j] += x.row(i)[j];
    }
    bool empty = false;
    for (auto v : cnt) empty = empty || v == 0;
    if (empty) continue;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x.row(i)[j] - sum[lab[i]][j] / static_cast<double>(cnt[lab[i]]);
        obj += diff * diff;
      }
    best = std::min(best, obj);
  }
  return best;
}

}  // namespace

TEST(FeatureMatrix, RejectsRaggedRows) {
  EXPECT_THROW(FeatureMatrix::from_rows({{1, 2}, {3}}), std::invalid_argument);
}

TEST(Kmeans, SeparatedGroups) {
  const auto x = FeatureMatrix::from_rows({{0, 0}, {0.2, 0.1}, {0.1, 0.3}, {10, 10}, {10.2, 9.9}});
  const auto a = gradq::kmeans(x, 2, 3);
  EXPECT_EQ(a.labels[0], a.labels[1]);
  EXPECT_EQ(a.labels[1], a.labels[2]);
  EXPECT_EQ(a.labels[3], a.labels[4]);
  EXPECT_NE(a.labels[0], a.labels[3]);
  const auto& c0 = a.centroids[a.labels[0]];
  const auto& c1 = a.centroids[a.labels[3]];
  EXPECT_NEAR(c0[0], 0.1, 1e-12);
  EXPECT_NEAR(c0[1], 0.4 / 3.0, 1e-12);
  EXPECT_NEAR(c1[0], 10.1, 1e-12);
  EXPECT_NEAR(c1[1], 9.95, 1e-12);
  EXPECT_NEAR(a.objective, exhaustive_optimum(x, 2), 1e-12);
}

TEST(Kmeans, SingleClusterCentroidIsGlobalMean) {
  const auto x = FeatureMatrix::from_rows({{1, 2}, {3, 4}, {8, -3}});
  const auto a = gradq::kmeans(x, 1, 0);
  EXPECT_NEAR(a.centroids[0][0], 4.0, 1e-15);
  EXPECT_NEAR(a.centroids[0][1], 1.0, 1e-15);
}

TEST(Kmeans, OneClusterPerPoint) {
  std::mt19937_64 rng(2);
  const auto x = random_points(rng, 6, 2);
  const auto a = gradq::kmeans(x, 6, 1);
  EXPECT_EQ(a.objective, 0.0);
  std::vector<std::size_t> seen(6, 0);
  for (auto l : a.labels) ++seen[l];
  for (auto s : seen) EXPECT_EQ(s, 1u);
}

TEST(Kmeans, DuplicatePointsStillFillEveryCluster) {
  const auto x = FeatureMatrix::from_rows({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  const auto a = gradq::kmeans(x, 3, 4);
  for (auto l : a.labels) EXPECT_LT(l, 3u);
  EXPECT_EQ(a.objective, 0.0);
}

TEST(Kmeans, RejectsBadK) {
  const auto x = FeatureMatrix::from_rows({{1}, {2}});
  EXPECT_THROW(gradq::kmeans(x, 0, 1), std::invalid_argument);
  EXPECT_THROW(gradq::kmeans(x, 3, 1), std::invalid_argument);
  EXPECT_THROW(gradq::kmeans(FeatureMatrix(0, 2), 1, 1), std::invalid_argument);
}

TEST(Kmeans, InvariantsOnRandomInstances) {
  std::mt19937_64 rng(17);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t b = 2 + inst % 30, k = 1 + inst % std::min<std::size_t>(b, 5);
    const auto x = random_points(rng, b, 1 + inst % 3);
    const auto a = gradq::kmeans(x, k, static_cast<std::uint64_t>(inst));
    std::vector<std::size_t> pop(k, 0);
    for (auto l : a.labels) ++pop[l];
    std::size_t total = 0;
    for (auto p : pop) {
      EXPECT_GT(p, 0u);
      total += p;
    }
    EXPECT_EQ(total, b);
    for (std::size_t r = 0; r < b; ++r) {
      const double own = gradq::squared_distance(x.row(r), a.centroids[a.labels[r]]);
      for (const auto& c : a.centroids) EXPECT_LE(own, gradq::squared_distance(x.row(r), c) + 1e-12);
    }
    for (std::size_t i = 1; i < a.objective_history.size(); ++i)
      EXPECT_LE(a.objective_history[i], a.objective_history[i - 1] + 1e-12);
  }
}

TEST(Kmeans, MatchesExhaustiveOptimumOnSmallInstances) {
  std::mt19937_64 rng(23);
  for (int inst = 0; inst < 60; ++inst) {
    const std::size_t b = 3 + inst % 6, k = 1 + inst % 3;
    const auto x = random_points(rng, b, 2);
    const auto a = gradq::kmeans(x, k, static_cast<std::uint64_t>(inst), 100, 20);
    EXPECT_NEAR(a.objective, exhaustive_optimum(x, k), 1e-10) << "instance " << inst;
  }
}

TEST(Kmeans, DeterministicForSeed) {
  std::mt19937_64 rng(29);
  const auto x = random_points(rng, 40, 2);
  const auto a = gradq::kmeans(x, 4, 99);
  const auto b = gradq::kmeans(x, 4, 99);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(ChooseK, RatioToOptimalBatch) {
  EXPECT_EQ(gradq::choose_k(512, 128), 4u);
  EXPECT_EQ(gradq::choose_k(300, 128), 2u);
  EXPECT_EQ(gradq::choose_k(100, 128), 1u);
  EXPECT_EQ(gradq::choose_k(128, 128), 1u);
  EXPECT_EQ(gradq::choose_k(100, 50), 2u);
  EXPECT_THROW(gradq::choose_k(0, 10), std::invalid_argument);
}

namespace {

std::vector<std::vector<double>> random_grads(std::mt19937_64& rng, std::size_t b, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> g(b, std::vector<double>(d));
  for (auto& row : g)
    for (auto& v : row) v = n(rng);
  return g;
}

gradq::QueueStats<double> random_stats(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  gradq::QueueStats<double> s;
  s.sample_count = 3;
  for (std::size_t i = 0; i < d; ++i) {
    s.mean.push_back(n(rng));
    s.std.push_back(0.1 + std::abs(n(rng)));
  }
  return s;
}

}  // namespace

TEST(Aggregate, RhoOneReconstructsBatchMean) {
  std::mt19937_64 rng(31);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t b = 2 + inst % 20, k = 1 + inst % b, d = 5;
    const auto g = random_grads(rng, b, d);
    const auto x = FeatureMatrix::from_rows(random_grads(rng, b, 2));
    const auto a = gradq::kmeans(x, k, static_cast<std::uint64_t>(inst));
    const auto gs = gradq::aggregate(g, a, random_stats(rng, d), gradq::BoostConfig{1.0});
    const auto mean = gradq::batch_mean(g);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(gs[i], mean[i], 1e-12);
  }
}

TEST(Aggregate, SingleClusterBoostsTheBatchMean) {
  std::mt19937_64 rng(37);
  const auto g = random_grads(rng, 12, 4);
  const auto st = random_stats(rng, 4);
  const gradq::BoostConfig cfg{3.0};
  const auto gs = gradq::aggregate(g, std::vector<std::size_t>(12, 0), 1, st, cfg);
  const auto want = gradq::delta_rho(gradq::batch_mean(g), st, cfg);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(gs[i], want[i], 1e-14);
}

TEST(Aggregate, PopulationsSumToBatchAndWeightsApply) {
  const std::vector<std::vector<double>> g{{1.0}, {3.0}, {10.0}};
  gradq::QueueStats<double> st{{2.0}, {1.0}, 3};
  const auto clusters = gradq::cluster_aggregates(g, {0, 0, 1}, 2, st, gradq::BoostConfig{3.0});
  EXPECT_EQ(clusters[0].population + clusters[1].population, 3u);
  EXPECT_DOUBLE_EQ(clusters[0].cluster_mean_grad[0], 2.0);
  EXPECT_DOUBLE_EQ(clusters[0].boosted[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(clusters[1].boosted[0], 30.0);
  const auto gs = gradq::aggregate(g, {0, 0, 1}, 2, st, gradq::BoostConfig{3.0});
  EXPECT_DOUBLE_EQ(gs[0], (2.0 * 2.0 / 3.0 + 30.0) / 3.0);
}

TEST(Aggregate, NoStatsMeansNoBoost) {
  const std::vector<std::vector<double>> g{{1.0}, {3.0}, {10.0}};
  const auto gs = gradq::aggregate(g, {0, 1, 1}, 2, std::nullopt, gradq::BoostConfig{3.0});
  EXPECT_DOUBLE_EQ(gs[0], 14.0 / 3.0);
}

TEST(Aggregate, EmptyGradientSetRejected) {
  EXPECT_THROW(gradq::aggregate({}, {}, 1, std::nullopt, gradq::BoostConfig{}), std::invalid_argument);
  EXPECT_THROW(gradq::batch_mean({}), std::invalid_argument);
}
