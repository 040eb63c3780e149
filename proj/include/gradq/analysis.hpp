#pragma once

// Closed forms for momentum driven by a periodic sparse signal, with and
// without the grad-queue boost, plus step-by-step simulators that check them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradq/grad_queue.hpp"

namespace gradq::analysis {

/// Raised when a closed form is evaluated outside the regime it was derived
/// for.
struct RegimeError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Periodic stream emitting `C` every `N` steps and `u` otherwise.
struct SparseSignalSpec {
  double C = 5.0;
  double u = -1.0;
  std::size_t N = 3;

  void validate() const {
    if (N < 3) throw std::invalid_argument("SparseSignalSpec: N must be >= 3, got " + std::to_string(N));
  }
};

struct LemmaParams {
  double beta = 0.9;
  double rho = 3.0;
  std::size_t L = 3;  // queue length
  std::size_t k = 1;  // period index
};

/// t >= 1.
inline double sparse_signal(std::size_t t, const SparseSignalSpec& spec) {
  if (t == 0) throw std::invalid_argument("sparse_signal: t starts at 1");
  return t % spec.N == 0 ? spec.C : spec.u;
}

/// beta_x = (beta^x - 1) / (beta - 1) = 1 + beta + ... + beta^(x-1).
inline double geometric_sum(double beta, std::size_t x) {
  if (beta == 1.0) return static_cast<double>(x);
  return (std::pow(beta, static_cast<double>(x)) - 1.0) / (beta - 1.0);
}

/// beta^N_k = sum_{j=0}^{k-1} beta^(jN); zero for k = 0.
inline double periodic_sum(double beta, std::size_t N, std::size_t k) {
  return geometric_sum(std::pow(beta, static_cast<double>(N)), k);
}

/// m_t = beta * m_{t-1} + g_t from m_0 = 0. Element t-1 holds m_t.
inline std::vector<double> simulate_momentum(const SparseSignalSpec& spec, double beta, std::size_t steps) {
  spec.validate();
  if (steps == 0) throw std::invalid_argument("simulate_momentum: steps must be >= 1");
  std::vector<double> m;
  m.reserve(steps);
  double cur = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    cur = beta * cur + sparse_signal(t, spec);
    m.push_back(cur);
  }
  return m;
}

/// Momentum at t = kN for the plain recurrence.
inline double lemma1_closed(const SparseSignalSpec& spec, double beta, std::size_t k) {
  spec.validate();
  if (k == 0) throw std::invalid_argument("lemma1_closed: k must be >= 1");
  return periodic_sum(beta, spec.N, k) * (spec.u * beta * geometric_sum(beta, spec.N - 1) + spec.C);
}

/// |C/u| above which plain momentum at t = N follows the sign of C.
inline double threshold_plain(std::size_t N, double beta) {
  if (N < 3) throw std::invalid_argument("threshold_plain: N must be >= 3");
  return beta * geometric_sum(beta, N - 1);
}

/// Variant indexed by N instead of N-1; it reproduces the worked figures
/// 2.44 (N=3) and 5.51 (N=9) at beta = 0.9.
inline double threshold_plain_shifted(std::size_t N, double beta) {
  if (N < 3) throw std::invalid_argument("threshold_plain_shifted: N must be >= 3");
  return beta * geometric_sum(beta, N);
}

/// Boost scale of a value repeated L-1 times in a queue that also holds one
/// distinct value: max(1/sqrt(L-1), 1/rho).
inline double lemma2_phi(std::size_t L, double rho) {
  if (L < 2) throw std::invalid_argument("lemma2_phi: L must be >= 2");
  if (!(rho >= 1.0)) throw std::invalid_argument("lemma2_phi: rho must be >= 1");
  return std::max(1.0 / std::sqrt(static_cast<double>(L - 1)), 1.0 / rho);
}

namespace detail {
inline void check_lemma3_regime(std::size_t N, const LemmaParams& p) {
  if (p.L + 1 >= N)
    throw RegimeError("closed form requires L < N-1 (L=" + std::to_string(p.L) + ", N=" + std::to_string(N) + ")");
  if (p.L == 1) throw RegimeError("closed form requires L = 0 or L >= 2");
  if (!(p.rho >= 1.0)) throw std::invalid_argument("rho must be >= 1");
}

inline double phi_or_one(const LemmaParams& p) { return p.L >= 2 ? lemma2_phi(p.L, p.rho) : 1.0; }
}  // namespace detail

/// gamma^0_{N-1}: damping of the first period, whose first L steps are
/// unboosted warm-up.
inline double gamma0(std::size_t N, const LemmaParams& p) {
  detail::check_lemma3_regime(N, p);
  const std::size_t tail = N - 1 - p.L;
  return std::pow(p.beta, static_cast<double>(tail)) * geometric_sum(p.beta, p.L) +
         geometric_sum(p.beta, tail) / p.rho;
}

/// gamma_{N-1}: damping of later periods, whose first L steps see the sparse
/// value still in the queue.
inline double gamma(std::size_t N, const LemmaParams& p) {
  detail::check_lemma3_regime(N, p);
  const std::size_t tail = N - 1 - p.L;
  return detail::phi_or_one(p) * std::pow(p.beta, static_cast<double>(tail)) * geometric_sum(p.beta, p.L) +
         geometric_sum(p.beta, tail) / p.rho;
}

/// Boosted momentum at t = kN (k taken from params).
inline double lemma3_closed(const SparseSignalSpec& spec, const LemmaParams& p) {
  spec.validate();
  if (p.k == 0) throw std::invalid_argument("lemma3_closed: k must be >= 1");
  const double g0 = gamma0(spec.N, p);
  const double g = gamma(spec.N, p);
  const double first = spec.u * p.beta * g0 + p.rho * spec.C;
  const double rest = spec.u * p.beta * g + p.rho * spec.C;
  return std::pow(p.beta, static_cast<double>(spec.N * (p.k - 1))) * first + periodic_sum(p.beta, spec.N, p.k - 1) * rest;
}

/// |C/u| above which boosted momentum at t = N follows the sign of C.
inline double threshold_boosted(std::size_t N, const LemmaParams& p) { return p.beta * gamma0(N, p) / p.rho; }

/// Boosted momentum under the piecewise substitution rules the closed form is
/// built on: every sparse step contributes rho*C; in the first period the
/// first L repeated steps are unboosted; in later periods the first L
/// repeated steps after a sparse step are scaled by phi; all other repeated
/// steps are scaled by 1/rho.
inline std::vector<double> simulate_lemma3_convention(const SparseSignalSpec& spec, const LemmaParams& p,
                                                      std::size_t steps) {
  spec.validate();
  detail::check_lemma3_regime(spec.N, p);
  const double phi = detail::phi_or_one(p);
  std::vector<double> m;
  m.reserve(steps);
  double cur = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const std::size_t pos = t % spec.N;  // steps since the last sparse event
    double contribution;
    if (pos == 0) {
      contribution = p.rho * spec.C;
    } else if (pos <= p.L) {
      contribution = (t < spec.N ? 1.0 : phi) * spec.u;
    } else {
      contribution = spec.u / p.rho;
    }
    cur = p.beta * cur + contribution;
    m.push_back(cur);
  }
  return m;
}

/// Fully mechanistic boosted momentum: a real grad queue of length L fed by
/// the raw signal, the real boost operator, m_t = beta*m_{t-1} + boost(g_t).
/// Boosting starts once the queue holds `warmup` entries (default: full).
inline std::vector<double> simulate_gq_momentum(const SparseSignalSpec& spec, const LemmaParams& p, std::size_t steps,
                                                std::optional<std::size_t> warmup = std::nullopt,
                                                double sigma_floor = 1e-12) {
  spec.validate();
  if (steps == 0) throw std::invalid_argument("simulate_gq_momentum: steps must be >= 1");
  if (p.L == 0) throw std::invalid_argument("simulate_gq_momentum: queue length must be >= 1");
  GradBooster<double> booster(p.L, BoostConfig{p.rho, sigma_floor}, warmup.value_or(p.L));
  std::vector<double> m;
  m.reserve(steps);
  double cur = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double g[1] = {sparse_signal(t, spec)};
    const auto b = booster.boost(std::span<const double>(g));
    cur = p.beta * cur + b[0];
    booster.observe(std::span<const double>(g));
    m.push_back(cur);
  }
  return m;
}

/// Result of sweeping |C/u| with u = -1 and counting, at every t = kN
/// (k = 1..periods), which sign the plain and the boosted momentum carry.
struct SignSweep {
  std::vector<double> ratios;
  std::vector<bool> plain_follows_c;    // sign(C) at every kN
  std::vector<bool> plain_follows_u;    // sign(u) at every kN
  std::vector<bool> boosted_follows_c;  // sign(C) at every kN
  double plain_threshold = 0.0;         // smallest swept ratio where plain follows C (NaN if none)
  double boosted_threshold = 0.0;       // same for boosted momentum

  /// Ratios at which plain momentum follows u while boosted momentum follows C.
  std::size_t band_size() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) n += plain_follows_u[i] && boosted_follows_c[i];
    return n;
  }
};

/// The boosted trajectory is the mechanistic queue simulation with a queue of
/// length params.L.
inline SignSweep sign_threshold_sweep(std::size_t N, const LemmaParams& p, const std::vector<double>& ratios,
                                      std::size_t periods = 10) {
  SignSweep out;
  out.ratios = ratios;
  out.plain_threshold = std::numeric_limits<double>::quiet_NaN();
  out.boosted_threshold = std::numeric_limits<double>::quiet_NaN();
  for (double r : ratios) {
    const SparseSignalSpec spec{r, -1.0, N};
    const auto plain = simulate_momentum(spec, p.beta, N * periods);
    const auto boosted = simulate_gq_momentum(spec, p, N * periods);
    bool pc = true, pu = true, bc = true;
    for (std::size_t k = 1; k <= periods; ++k) {
      const double mp = plain[k * N - 1];
      const double mb = boosted[k * N - 1];
      pc = pc && mp > 0.0;
      pu = pu && mp < 0.0;
      bc = bc && mb > 0.0;
    }
    out.plain_follows_c.push_back(pc);
    out.plain_follows_u.push_back(pu);
    out.boosted_follows_c.push_back(bc);
    if (pc && std::isnan(out.plain_threshold)) out.plain_threshold = r;
    if (bc && std::isnan(out.boosted_threshold)) out.boosted_threshold = r;
  }
  return out;
}

/// Mini-batch of B = p + q samples: p monotonous with mean gradient eq_p and
/// q sparse with mean gradient eq_q.
struct BatchCompositionCase {
  std::size_t B = 100;
  std::size_t p = 95;
  std::size_t q = 5;
  double eq_q = 1.0;
  double eq_p = -0.04;

  void validate() const {
    if (q == 0) throw std::invalid_argument("BatchCompositionCase: q must be >= 1");
    if (p + q != B) throw std::invalid_argument("BatchCompositionCase: p + q must equal B");
  }
};

struct BatchError {
  double eg_b = 0.0;  // E(g^b)
  double e_k = 0.0;   // |E(g^q) - E(g^b)|
  int case_label = 1;
};

inline double batch_mean_gradient(const BatchCompositionCase& c) {
  return (static_cast<double>(c.q) * c.eq_q + static_cast<double>(c.p) * c.eq_p) / static_cast<double>(c.B);
}

/// Case 1: the sparse expectation dominates (or there is no opposition);
/// case 2: opposing and exactly cancelling (|E(g^q)/E(g^p)| = p/q);
/// case 3: opposing and the monotonous expectation dominates.
inline BatchError batch_error_case(const BatchCompositionCase& c, double ratio_tolerance = 1e-9) {
  c.validate();
  BatchError out;
  out.eg_b = batch_mean_gradient(c);
  out.e_k = std::abs(c.eq_q - out.eg_b);
  if (c.p == 0 || c.eq_p == 0.0 || c.eq_q * c.eq_p > 0.0) {
    out.case_label = 1;
    return out;
  }
  const double ratio = std::abs(c.eq_q / c.eq_p);
  const double balance = static_cast<double>(c.p) / static_cast<double>(c.q);
  if (std::abs(ratio - balance) <= ratio_tolerance * balance)
    out.case_label = 2;
  else
    out.case_label = ratio > balance ? 1 : 3;
  return out;
}

/// Boost magnitude at which amplifying the sparse part by zeta and damping the
/// monotonous part by 1/zeta restores E(g^q): the larger root of
///   zeta^2 q E(g^q) - zeta B E(g^q) + p E(g^p) = 0.
inline double zeta(const BatchCompositionCase& c) {
  c.validate();
  if (c.eq_q == 0.0) throw std::domain_error("zeta: E(g^q) must be nonzero");
  const double a = static_cast<double>(c.q) * c.eq_q;
  const double b = -static_cast<double>(c.B) * c.eq_q;
  const double cc = static_cast<double>(c.p) * c.eq_p;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) throw std::domain_error("zeta: negative discriminant, no real boost reaches case 1");
  const double sq = std::sqrt(disc);
  // Cancellation-free pair of roots.
  const double qq = -0.5 * (b + std::copysign(sq, b));
  const double r1 = qq / a;
  const double r2 = qq != 0.0 ? cc / qq : r1;
  return std::max(r1, r2);
}

/// (q*zeta*E(g^q) + p*E(g^p)/zeta) / B: the batch mean after boosting the
/// sparse part by zeta and damping the monotonous part by 1/zeta.
inline double boosted_batch_mean(const BatchCompositionCase& c, double z) {
  return (static_cast<double>(c.q) * z * c.eq_q + static_cast<double>(c.p) * c.eq_p / z) / static_cast<double>(c.B);
}

}  // namespace gradq::analysis
