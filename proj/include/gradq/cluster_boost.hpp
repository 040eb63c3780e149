#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradq/grad_queue.hpp"

namespace gradq {

/// Row-major B x f matrix of per-sample feature vectors.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("FeatureMatrix: need at least one row");
    FeatureMatrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw std::invalid_argument("FeatureMatrix: ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * m.cols_));
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct ClusterAssignment {
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  std::size_t k = 0;
  double objective = 0.0;
  /// Objective after every Lloyd iteration of the retained run.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
};

struct ClusterAggregate {
  std::vector<double> cluster_mean_grad;
  std::size_t population = 0;
  std::vector<double> boosted;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Sum of squared distances of every sample to its assigned centroid.
inline double kmeans_objective(const FeatureMatrix& x, const std::vector<std::size_t>& labels,
                               const std::vector<std::vector<double>>& centroids) {
  double s = 0.0;
  for (std::size_t b = 0; b < x.rows(); ++b) s += squared_distance(x.row(b), centroids[labels[b]]);
  return s;
}

namespace detail {

inline std::vector<std::vector<double>> kmeanspp_seed(const FeatureMatrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  std::vector<std::vector<double>> centers;
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  centers.emplace_back(x.row(first).begin(), x.row(first).end());
  chosen[first] = true;

  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, squared_distance(x.row(b), c));
      d2[b] = chosen[b] ? 0.0 : best;
      total += d2[b];
    }
    std::size_t next = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        if (d2[b] <= 0.0) continue;
        acc += d2[b];
        next = b;
        if (acc >= target) break;
      }
    }
    if (next == n) {
      // All remaining points coincide with a chosen center.
      for (std::size_t b = 0; b < n; ++b)
        if (!chosen[b]) {
          next = b;
          break;
        }
    }
    chosen[next] = true;
    centers.emplace_back(x.row(next).begin(), x.row(next).end());
  }
  return centers;
}

/// Nearest-centroid assignment, ties to the lowest cluster index. Returns
/// true when any label changed.
inline bool assign_labels(const FeatureMatrix& x, const std::vector<std::vector<double>>& centroids,
                          std::vector<std::size_t>& labels) {
  bool changed = false;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    std::size_t best = 0;
    double best_d = squared_distance(x.row(b), centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      const double d = squared_distance(x.row(b), centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (labels[b] != best) {
      labels[b] = best;
      changed = true;
    }
  }
  return changed;
}

/// Moves the sample farthest from its centroid (taken from a cluster with at
/// least two members) into each empty cluster.
inline bool repair_empty(const FeatureMatrix& x, std::vector<std::vector<double>>& centroids,
                         std::vector<std::size_t>& labels) {
  const std::size_t k = centroids.size();
  bool repaired = false;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[l];
    if (counts[c] != 0) continue;
    std::size_t far = x.rows();
    double far_d = -1.0;
    for (std::size_t b = 0; b < x.rows(); ++b) {
      if (counts[labels[b]] < 2) continue;
      const double d = squared_distance(x.row(b), centroids[labels[b]]);
      if (d > far_d) {
        far_d = d;
        far = b;
      }
    }
    labels[far] = c;
    centroids[c].assign(x.row(far).begin(), x.row(far).end());
    repaired = true;
  }
  return repaired;
}

inline void update_centroids(const FeatureMatrix& x, const std::vector<std::size_t>& labels,
                             std::vector<std::vector<double>>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto& c = centroids[labels[b]];
    const auto r = x.row(b);
    for (std::size_t i = 0; i < r.size(); ++i) c[i] += r[i];
    ++counts[labels[b]];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (auto& v : centroids[c]) v /= static_cast<double>(counts[c]);
}

inline ClusterAssignment lloyd(const FeatureMatrix& x, std::size_t k, std::mt19937_64& rng, std::size_t max_iters) {
  ClusterAssignment out;
  out.k = k;
  out.centroids = kmeanspp_seed(x, k, rng);
  out.labels.assign(x.rows(), k);  // sentinel: first assignment always "changes"

  bool converged = false;
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = assign_labels(x, out.centroids, out.labels);
    changed = repair_empty(x, out.centroids, out.labels) || changed;
    ++out.iterations;
    if (!changed && it > 0) {
      converged = true;
      break;
    }
    update_centroids(x, out.labels, out.centroids);
    out.objective_history.push_back(kmeans_objective(x, out.labels, out.centroids));
  }
  if (!converged) {
    // Labels must be nearest-centroid with respect to the returned centroids.
    assign_labels(x, out.centroids, out.labels);
    repair_empty(x, out.centroids, out.labels);
  }
  out.objective = kmeans_objective(x, out.labels, out.centroids);
  return out;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding, squared Euclidean distance and
/// deterministic empty-cluster repair. With `restarts > 1` the run with the
/// lowest objective is kept; every restart draws from the same seeded stream.
inline ClusterAssignment kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                                std::size_t max_iters = 100, std::size_t restarts = 1) {
  if (features.rows() == 0) throw std::invalid_argument("kmeans: empty feature matrix");
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (k > features.rows())
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds the number of samples " +
                                std::to_string(features.rows()));
  if (max_iters == 0) throw std::invalid_argument("kmeans: max_iters must be positive");
  if (restarts == 0) throw std::invalid_argument("kmeans: restarts must be positive");

  std::mt19937_64 rng(seed);
  ClusterAssignment best = detail::lloyd(features, k, rng, max_iters);
  for (std::size_t r = 1; r < restarts; ++r) {
    auto run = detail::lloyd(features, k, rng, max_iters);
    if (run.objective < best.objective) best = std::move(run);
  }
  return best;
}

/// Number of clusters for a batch: its ratio to the optimal batch size,
/// rounded, at least one.
inline std::size_t choose_k(std::size_t batch_size, std::size_t optimal_batch) {
  if (batch_size == 0 || optimal_batch == 0) throw std::invalid_argument("choose_k: sizes must be positive");
  const auto k = static_cast<std::size_t>(
      std::llround(static_cast<double>(batch_size) / static_cast<double>(optimal_batch)));
  return std::max<std::size_t>(1, k);
}

/// Per-cluster mean gradients, populations and boosted means. Without
/// statistics (queue still warming up) the boost is the identity.
inline std::vector<ClusterAggregate> cluster_aggregates(const std::vector<std::vector<double>>& per_sample_grads,
                                                        const std::vector<std::size_t>& labels, std::size_t k,
                                                        const std::optional<QueueStats<double>>& stats,
                                                        const BoostConfig& cfg) {
  if (per_sample_grads.empty()) throw std::invalid_argument("aggregate: empty gradient set");
  if (labels.size() != per_sample_grads.size())
    throw std::invalid_argument("aggregate: assignment does not match the number of gradients");
  const std::size_t d = per_sample_grads.front().size();
  std::vector<ClusterAggregate> out(k);
  for (auto& c : out) c.cluster_mean_grad.assign(d, 0.0);
  for (std::size_t b = 0; b < per_sample_grads.size(); ++b) {
    if (per_sample_grads[b].size() != d) throw std::invalid_argument("aggregate: ragged gradients");
    if (labels[b] >= k) throw std::invalid_argument("aggregate: label out of range");
    auto& c = out[labels[b]];
    for (std::size_t i = 0; i < d; ++i) c.cluster_mean_grad[i] += per_sample_grads[b][i];
    ++c.population;
  }
  for (auto& c : out) {
    if (c.population == 0) continue;
    for (auto& v : c.cluster_mean_grad) v /= static_cast<double>(c.population);
    c.boosted = stats ? delta_rho(c.cluster_mean_grad, *stats, cfg) : c.cluster_mean_grad;
  }
  return out;
}

/// g* = (1/B) * sum_j population_j * delta_rho(mean_j).
inline std::vector<double> aggregate(const std::vector<std::vector<double>>& per_sample_grads,
                                     const std::vector<std::size_t>& labels, std::size_t k,
                                     const std::optional<QueueStats<double>>& stats, const BoostConfig& cfg) {
  const auto clusters = cluster_aggregates(per_sample_grads, labels, k, stats, cfg);
  const std::size_t d = per_sample_grads.front().size();
  const double inv_b = 1.0 / static_cast<double>(per_sample_grads.size());
  std::vector<double> g(d, 0.0);
  for (const auto& c : clusters) {
    if (c.population == 0) continue;
    const double w = static_cast<double>(c.population);
    for (std::size_t i = 0; i < d; ++i) g[i] += w * c.boosted[i];
  }
  for (auto& v : g) v *= inv_b;
  return g;
}

inline std::vector<double> aggregate(const std::vector<std::vector<double>>& per_sample_grads,
                                     const ClusterAssignment& assignment,
                                     const std::optional<QueueStats<double>>& stats, const BoostConfig& cfg) {
  return aggregate(per_sample_grads, assignment.labels, assignment.k, stats, cfg);
}

/// Plain batch mean of per-sample gradients.
inline std::vector<double> batch_mean(const std::vector<std::vector<double>>& per_sample_grads) {
  if (per_sample_grads.empty()) throw std::invalid_argument("batch_mean: empty gradient set");
  std::vector<double> g(per_sample_grads.front().size(), 0.0);
  for (const auto& s : per_sample_grads)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i];
  for (auto& v : g) v /= static_cast<double>(per_sample_grads.size());
  return g;
}

}  // namespace gradq
