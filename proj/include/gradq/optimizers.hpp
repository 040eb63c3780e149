#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradq/grad_queue.hpp"

namespace gradq {

struct OptimizerConfig {
  double learning_rate = 0.01;
  double beta = 0.9;  // momentum, also Adam's first-moment decay
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  BoostConfig boost{};
  bool boost_enabled = true;
  std::size_t queue_capacity = 3;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("OptimizerConfig: learning_rate must be > 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("OptimizerConfig: beta must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw std::invalid_argument("OptimizerConfig: adam_beta2 must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("OptimizerConfig: adam_epsilon must be > 0");
    if (queue_capacity == 0) throw std::invalid_argument("OptimizerConfig: queue_capacity must be positive");
    boost.validate();
  }
};

namespace detail {
inline void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " + std::to_string(expected) +
                                ", got " + std::to_string(got) + ")");
}
}  // namespace detail

/// SGD with momentum, optionally boosted by the grad queue:
///   b = delta_rho(g) once the queue is warm, else g
///   m <- beta * m + b
///   params <- params - lr * m
/// The raw gradient is pushed onto the queue after the update.
template <std::floating_point Real = double>
class Sgdm {
 public:
  Sgdm(std::size_t dim, OptimizerConfig cfg)
      : cfg_((cfg.validate(), cfg)), momentum_(dim, Real(0)), booster_(cfg.queue_capacity, cfg.boost) {}

  void step(std::span<Real> params, std::span<const Real> grad) {
    detail::check_dim(momentum_.size(), grad.size(), "Sgdm::step");
    if (cfg_.boost_enabled) {
      const auto boosted = booster_.boost(grad);
      apply(params, boosted, grad);
    } else {
      apply(params, grad, grad);
    }
  }

  /// Applies an already aggregated update (e.g. a clustered, boosted batch
  /// gradient) and records `raw` in the queue.
  void apply(std::span<Real> params, std::span<const Real> update, std::span<const Real> raw) {
    detail::check_dim(momentum_.size(), params.size(), "Sgdm::apply params");
    detail::check_dim(momentum_.size(), update.size(), "Sgdm::apply update");
    detail::check_dim(momentum_.size(), raw.size(), "Sgdm::apply raw");
    const Real beta = static_cast<Real>(cfg_.beta);
    const Real lr = static_cast<Real>(cfg_.learning_rate);
    for (std::size_t i = 0; i < momentum_.size(); ++i) {
      momentum_[i] = beta * momentum_[i] + update[i];
      params[i] -= lr * momentum_[i];
    }
    booster_.observe(raw);
    ++step_count_;
  }

  const std::vector<Real>& momentum() const { return momentum_; }
  std::size_t step_count() const { return step_count_; }
  const GradBooster<Real>& booster() const { return booster_; }
  GradBooster<Real>& booster() { return booster_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Real> momentum_;
  GradBooster<Real> booster_;
  std::size_t step_count_ = 0;
};

/// Bias-corrected Adam whose moment estimates are fed the boosted gradient.
template <std::floating_point Real = double>
class Adam {
 public:
  Adam(std::size_t dim, OptimizerConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        first_(dim, Real(0)),
        second_(dim, Real(0)),
        booster_(cfg.queue_capacity, cfg.boost) {}

  void step(std::span<Real> params, std::span<const Real> grad) {
    detail::check_dim(first_.size(), grad.size(), "Adam::step");
    if (cfg_.boost_enabled) {
      const auto boosted = booster_.boost(grad);
      apply(params, boosted, grad);
    } else {
      apply(params, grad, grad);
    }
  }

  void apply(std::span<Real> params, std::span<const Real> update, std::span<const Real> raw) {
    detail::check_dim(first_.size(), params.size(), "Adam::apply params");
    detail::check_dim(first_.size(), update.size(), "Adam::apply update");
    detail::check_dim(first_.size(), raw.size(), "Adam::apply raw");
    ++step_count_;
    const Real b1 = static_cast<Real>(cfg_.beta);
    const Real b2 = static_cast<Real>(cfg_.adam_beta2);
    const Real lr = static_cast<Real>(cfg_.learning_rate);
    const Real eps = static_cast<Real>(cfg_.adam_epsilon);
    const Real c1 = Real(1) - std::pow(b1, static_cast<Real>(step_count_));
    const Real c2 = Real(1) - std::pow(b2, static_cast<Real>(step_count_));
    for (std::size_t i = 0; i < first_.size(); ++i) {
      const Real b = update[i];
      first_[i] = b1 * first_[i] + (Real(1) - b1) * b;
      second_[i] = b2 * second_[i] + (Real(1) - b2) * b * b;
      params[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + eps);
    }
    booster_.observe(raw);
  }

  const std::vector<Real>& first_moment() const { return first_; }
  const std::vector<Real>& second_moment() const { return second_; }
  std::size_t step_count() const { return step_count_; }
  const GradBooster<Real>& booster() const { return booster_; }
  GradBooster<Real>& booster() { return booster_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Real> first_;
  std::vector<Real> second_;
  GradBooster<Real> booster_;
  std::size_t step_count_ = 0;
};

}  // namespace gradq
