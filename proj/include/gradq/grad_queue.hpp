#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradq {

/// Per-coordinate population mean and standard deviation over the most
/// recent queue entries.
template <std::floating_point Real = double>
struct QueueStats {
  std::vector<Real> mean;
  std::vector<Real> std;
  std::size_t sample_count = 0;

  std::size_t dim() const { return mean.size(); }
};

/// Clamp configuration of the sparsity-boost operator. The boost scale of
/// every coordinate is restricted to [1/rho, rho].
struct BoostConfig {
  double rho = 3.0;
  double sigma_floor = 1e-12;

  void validate() const {
    // rho == 1 is accepted: the clamp collapses to {1} and the operator is
    // the identity.
    if (!(rho >= 1.0) || !std::isfinite(rho))
      throw std::invalid_argument("BoostConfig: rho must be >= 1, got " + std::to_string(rho));
    if (!(sigma_floor > 0.0))
      throw std::invalid_argument("BoostConfig: sigma_floor must be > 0");
  }
};

/// Bounded FIFO of flattened gradient snapshots. The first push fixes the
/// dimension; later pushes of another dimension are rejected.
template <std::floating_point Real = double>
class GradQueue {
 public:
  explicit GradQueue(std::size_t capacity) : capacity_(capacity), effective_length_(capacity) {
    if (capacity == 0) throw std::invalid_argument("GradQueue: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  std::size_t effective_length() const { return effective_length_; }

  void set_effective_length(std::size_t len) {
    if (len == 0 || len > capacity_)
      throw std::invalid_argument("GradQueue: effective length must lie in [1, capacity]");
    effective_length_ = len;
  }

  void push(std::span<const Real> g) {
    if (entries_.empty() && dim_ == 0) {
      if (g.empty()) throw std::invalid_argument("GradQueue: cannot push an empty gradient");
      dim_ = g.size();
    } else if (g.size() != dim_) {
      throw std::invalid_argument("GradQueue: dimension mismatch (expected " + std::to_string(dim_) +
                                  ", got " + std::to_string(g.size()) + ")");
    }
    entries_.emplace_back(g.begin(), g.end());
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  void clear() {
    entries_.clear();
    dim_ = 0;
  }

  /// Oldest first.
  const std::deque<std::vector<Real>>& entries() const { return entries_; }

  /// Number of entries the statistics are computed over.
  std::size_t window() const { return std::min(effective_length_, entries_.size()); }

  QueueStats<Real> stats() const {
    if (entries_.empty()) throw std::logic_error("GradQueue: statistics of an empty queue are undefined");
    const std::size_t n = window();
    const std::size_t first = entries_.size() - n;

    QueueStats<Real> out;
    out.sample_count = n;
    out.mean.assign(dim_, Real(0));
    out.std.assign(dim_, Real(0));
    // Mean taken as an offset from the oldest entry in the window, so a
    // window of identical values has exactly that value as its mean.
    const auto& pivot = entries_[first];
    for (std::size_t e = first + 1; e < entries_.size(); ++e) {
      const auto& v = entries_[e];
      for (std::size_t i = 0; i < dim_; ++i) out.mean[i] += v[i] - pivot[i];
    }
    for (std::size_t i = 0; i < dim_; ++i) out.mean[i] = pivot[i] + out.mean[i] / static_cast<Real>(n);

    // Second pass on centred values; E(g^2) - E(g)^2 cancels badly when the
    // spread is small compared to the mean.
    for (std::size_t e = first; e < entries_.size(); ++e) {
      const auto& v = entries_[e];
      for (std::size_t i = 0; i < dim_; ++i) {
        const Real d = v[i] - out.mean[i];
        out.std[i] += d * d;
      }
    }
    for (auto& s : out.std) s = std::sqrt(s / static_cast<Real>(n));
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t effective_length_;
  std::size_t dim_ = 0;
  std::deque<std::vector<Real>> entries_;
};

/// Clamped distance of a single coordinate from its history, before it is
/// mapped into [1/rho, rho].
template <std::floating_point Real>
Real boost_distance(Real g, Real mu, Real sigma, const BoostConfig& cfg) {
  const Real dev = std::abs(g - mu);
  const Real floor = static_cast<Real>(cfg.sigma_floor);
  if (sigma <= floor) return dev <= floor ? Real(0) : static_cast<Real>(cfg.rho);
  return dev / sigma;
}

/// Boost scale in [1/rho, rho] for a distance z.
template <std::floating_point Real>
Real boost_scale(Real z, const BoostConfig& cfg) {
  const Real rho = static_cast<Real>(cfg.rho);
  if (z > Real(1)) return std::min(z, rho);
  return std::max(z, Real(1) / rho);
}

template <std::floating_point Real>
Real delta_rho(Real g, Real mu, Real sigma, const BoostConfig& cfg) {
  return boost_scale(boost_distance(g, mu, sigma, cfg), cfg) * g;
}

/// Elementwise sparsity boost: each coordinate is rescaled by its clamped
/// z-score against the queue statistics.
template <std::floating_point Real>
std::vector<Real> delta_rho(std::span<const Real> g, const QueueStats<Real>& stats, const BoostConfig& cfg) {
  if (g.size() != stats.dim())
    throw std::invalid_argument("delta_rho: gradient dimension " + std::to_string(g.size()) +
                                " does not match statistics dimension " + std::to_string(stats.dim()));
  std::vector<Real> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = delta_rho(g[i], stats.mean[i], stats.std[i], cfg);
  return out;
}

template <std::floating_point Real>
std::vector<Real> delta_rho(const std::vector<Real>& g, const QueueStats<Real>& stats, const BoostConfig& cfg) {
  return delta_rho(std::span<const Real>(g), stats, cfg);
}

/// Queue plus boost configuration. Boosting stays the identity until the
/// queue holds `warmup` entries (default min(3, capacity)).
template <std::floating_point Real = double>
class GradBooster {
 public:
  GradBooster(std::size_t capacity, BoostConfig cfg, std::optional<std::size_t> warmup = std::nullopt)
      : queue_(capacity), cfg_(cfg), warmup_(warmup.value_or(std::min<std::size_t>(3, capacity))) {
    cfg_.validate();
    if (warmup_ == 0 || warmup_ > capacity)
      throw std::invalid_argument("GradBooster: warmup must lie in [1, capacity]");
  }

  bool active() const { return queue_.size() >= warmup_; }

  std::optional<QueueStats<Real>> stats() const {
    if (!active()) return std::nullopt;
    return queue_.stats();
  }

  std::vector<Real> boost(std::span<const Real> g) const {
    if (!queue_.empty() && g.size() != queue_.dim())
      throw std::invalid_argument("GradBooster: gradient dimension mismatch");
    if (!active()) return {g.begin(), g.end()};
    return delta_rho(g, queue_.stats(), cfg_);
  }

  void observe(std::span<const Real> raw) { queue_.push(raw); }

  const GradQueue<Real>& queue() const { return queue_; }
  GradQueue<Real>& queue() { return queue_; }
  const BoostConfig& config() const { return cfg_; }
  std::size_t warmup() const { return warmup_; }

 private:
  GradQueue<Real> queue_;
  BoostConfig cfg_;
  std::size_t warmup_;
};

/// Variable queue length driven by a sliding window over recent losses: the
/// longer the loss has been decreasing, the longer the effective queue.
class QueueLengthController {
 public:
  QueueLengthController(std::size_t window = 2, std::size_t min_length = 3, std::size_t max_length = 5)
      : window_(window), min_length_(min_length), max_length_(max_length) {
    if (window == 0) throw std::invalid_argument("QueueLengthController: window must be positive");
    if (min_length == 0 || min_length > max_length)
      throw std::invalid_argument("QueueLengthController: need 1 <= min_length <= max_length");
    if (window > max_length) throw std::invalid_argument("QueueLengthController: window must not exceed max_length");
  }

  void push_loss(double loss) {
    history_.push_back(loss);
    while (history_.size() > max_length_ + window_) history_.pop_front();
  }

  std::size_t effective_length() const {
    const std::size_t n = history_.size();
    if (n < window_) return min_length_;
    // S_j = sum of the window ending j steps before the newest loss.
    auto window_sum = [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t i = 0; i < window_; ++i) s += history_[n - 1 - j - i];
      return s;
    };
    std::size_t count = 0;
    double prev = window_sum(0);
    for (std::size_t j = 1; j + window_ <= n; ++j) {
      const double cur = window_sum(j);
      if (!(cur > prev)) break;
      ++count;
      prev = cur;
    }
    return std::clamp(min_length_ + count, min_length_, max_length_);
  }

  std::size_t window() const { return window_; }
  std::size_t min_length() const { return min_length_; }
  std::size_t max_length() const { return max_length_; }
  const std::deque<double>& history() const { return history_; }

 private:
  std::size_t window_;
  std::size_t min_length_;
  std::size_t max_length_;
  std::deque<double> history_;
};

}  // namespace gradq
