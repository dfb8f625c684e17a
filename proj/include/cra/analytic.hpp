#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cra/params.hpp"
#include "cra/specfun.hpp"

namespace cra::analytic {

// ---------------------------------------------------------------------------
// Preamble occupancy with K users drawing uniformly from L preambles.
// ---------------------------------------------------------------------------

/// Probability that a given preamble is chosen by exactly one of K users.
inline double alpha1(std::int64_t K, std::int64_t L) {
  if (L < 2) throw ConfigError("pool_size", "must be >= 2");
  if (K <= 0) return 0.0;
  const double k = static_cast<double>(K);
  const double inv_l = 1.0 / static_cast<double>(L);
  return k * inv_l * std::exp((k - 1.0) * std::log1p(-inv_l));
}

/// Probability that a given preamble is chosen by nobody.
inline double alpha2(std::int64_t K, std::int64_t L) {
  if (L < 2) throw ConfigError("pool_size", "must be >= 2");
  if (K <= 0) return 1.0;
  return std::exp(static_cast<double>(K) * std::log1p(-1.0 / static_cast<double>(L)));
}

/// Conditional means of the detected-slot counts given K active users.
struct DetectionMeans {
  double singleton = 0.0;  // E[D1 | K], detected singleton preambles
  double collided = 0.0;   // E[D2 | K], detected multi-user preambles
  double false_alarm = 0.0;  // E[D3 | K], falsely detected unused preambles

  double total() const { return singleton + collided + false_alarm; }
};

/// Per-preamble means scaled by L. Exact in expectation (linearity), with
/// false alarms drawn from the L alpha2 unused preambles.
inline DetectionMeans lemma1_means(std::int64_t K, const ProtocolParams& p) {
  const double L = static_cast<double>(p.pool_size);
  const double a1 = alpha1(K, p.pool_size);
  const double a2 = alpha2(K, p.pool_size);
  const double hit = 1.0 - p.p_md;
  return {hit * L * a1, hit * L * std::max(0.0, 1.0 - a1 - a2), p.p_fa * L * a2};
}

// ---------------------------------------------------------------------------
// CRA-2 steady state.
// ---------------------------------------------------------------------------

/// Coefficients of the fixed point beta2/L = c1 - c2 exp(-beta2/L).
struct FixedPointCoeffs {
  double c1 = 0.0;
  double c2 = 0.0;

  /// Argument handed to W0; lies in [-1/e, 0] whenever c1 >= c2 >= 0.
  double lambert_arg() const { return -c2 * std::exp(-c1); }
};

inline FixedPointCoeffs fixed_point_coeffs(const ProtocolParams& p) {
  p.validate();
  const double lam = p.arrival_rate;
  const double L = static_cast<double>(p.pool_size);
  return {lam * (p.overhead_time() / L + p.data_time() * (1.0 - p.p_md)),
          lam * p.data_time() * (1.0 - p.p_md - p.p_fa)};
}

/**
 * Mean number of active users per CRA-2 session in steady state:
 * beta2 = L (c1 + W0(-c2 e^{-c1})).
 *
 * W0 gives the unique nonnegative root of x = c1 - c2 e^{-x} when
 * P_MD + P_FA <= 1. Two Newton steps on that equation remove the
 * cancellation in c1 + W at light load.
 */
inline double solve_beta2(const ProtocolParams& p) {
  const auto c = fixed_point_coeffs(p);
  const double arg = c.lambert_arg();
  if (arg < -specfun::kInvE - specfun::kBranchTolerance || arg > 0.0)
    throw DomainError("solve_beta2: Lambert argument outside [-1/e, 0]");
  double x = c.c1 + specfun::lambert_w0(arg);
  for (int i = 0; i < 2; ++i) {
    const double t = c.c2 * std::exp(-x);
    const double slope = 1.0 - t;
    if (slope < 1e-8) break;  // at the branch point the root is double
    x -= (x - c.c1 + t) / slope;
  }
  return static_cast<double>(p.pool_size) * std::max(x, 0.0);
}

/// Mean number of detected preambles per session, from beta2 directly:
/// L((1 - P_MD) - e^{-beta2/L}(1 - P_MD - P_FA)).
inline double mean_detected(const ProtocolParams& p) {
  const double L = static_cast<double>(p.pool_size);
  const double beta2 = solve_beta2(p);
  return L * ((1.0 - p.p_md) - std::exp(-beta2 / L) * (1.0 - p.p_md - p.p_fa));
}

/// Same quantity through the Lambert form L(1 - P_MD + W/(lambda T_D)).
/// Zero arrival rate falls back to the limit L P_FA.
inline double mean_detected_lambert(const ProtocolParams& p) {
  const auto c = fixed_point_coeffs(p);
  const double L = static_cast<double>(p.pool_size);
  if (p.arrival_rate == 0.0) return L * p.p_fa;
  const double w = specfun::lambert_w0(c.lambert_arg());
  return L * (1.0 - p.p_md + w / (p.arrival_rate * p.data_time()));
}

struct SteadyState {
  double beta2 = 0.0;             // mean active users per session
  double d_bar = 0.0;             // mean detected preambles
  double d1_bar = 0.0;            // mean detected singletons
  double eta2 = 0.0;              // successes per symbol
  double mean_session_len = 0.0;  // symbols

  /// eta2 as the ratio of mean successes to mean session length.
  double ratio_throughput() const { return d1_bar / mean_session_len; }
};

inline SteadyState throughput_cra2(const ProtocolParams& p) {
  SteadyState s;
  const double L = static_cast<double>(p.pool_size);
  s.beta2 = solve_beta2(p);
  const double survive = std::exp(-s.beta2 / L);
  s.d_bar = L * ((1.0 - p.p_md) - survive * (1.0 - p.p_md - p.p_fa));
  s.d1_bar = (1.0 - p.p_md) * s.beta2 * survive;
  s.mean_session_len = p.overhead_time() + p.data_time() * s.d_bar;
  s.eta2 = p.arrival_rate * (1.0 - p.p_md) * survive;
  return s;
}

// ---------------------------------------------------------------------------
// Fixed-length schemes.
// ---------------------------------------------------------------------------

/// CRA-1: lambda (1 - P_MD) e^{-beta1/L} Pr(V <= N-2), V ~ Poisson(beta1 (1 - 1/L)),
/// beta1 = lambda Z. MUD decodes only when at most N-1 users are active.
inline double throughput_cra1(const ProtocolParams& p) {
  p.validate();
  if (p.preamble_len < 2) throw ConfigError("preamble_len", "CRA-1 needs N >= 2");
  const double L = static_cast<double>(p.pool_size);
  const double beta1 = p.arrival_rate * p.fixed_session_len();
  return p.arrival_rate * (1.0 - p.p_md) * std::exp(-beta1 / L) *
         specfun::poisson_cdf(p.preamble_len - 2, beta1 * (1.0 - 1.0 / L));
}

/// Multichannel ALOHA: N orthogonal preambles (L replaced by N), at most N
/// simultaneously active users decodable, i.e. Pr(V <= N-1) with
/// V ~ Poisson(beta1 (1 - 1/N)).
inline double throughput_maloha(const ProtocolParams& p) {
  p.validate();
  const double N = p.preamble_time();
  const double beta1 = p.arrival_rate * p.fixed_session_len();
  return p.arrival_rate * (1.0 - p.p_md) * std::exp(-beta1 / N) *
         specfun::poisson_cdf(p.preamble_len - 1, beta1 * (1.0 - 1.0 / N));
}

// ---------------------------------------------------------------------------
// Fast retrial.
// ---------------------------------------------------------------------------

/// Expected one-session change of the active-user count when unsuccessful
/// users retry immediately.
inline double drift(std::int64_t K, const ProtocolParams& p) {
  const auto m = lemma1_means(K, p);
  const double lam = p.arrival_rate;
  return lam * (p.overhead_time() + p.data_time() * (m.collided + m.false_alarm)) -
         (1.0 - lam * p.data_time()) * m.singleton;
}

/// Limit of drift(K) as K grows: lambda (T~P + T_D (1 - P_MD) L).
inline double drift_limit(const ProtocolParams& p) {
  return p.arrival_rate *
         (p.overhead_time() + p.data_time() * (1.0 - p.p_md) * static_cast<double>(p.pool_size));
}

/**
 * Smallest K0 such that drift(K) > 0 for every K >= K0.
 *
 * Scans K upward until the occupancy terms have decayed (L alpha1 below
 * 1e-12) and the drift has settled on its positive limit; throws when the
 * limit itself is not positive.
 */
inline std::int64_t drift_threshold(const ProtocolParams& p) {
  if (!(drift_limit(p) > 0.0))
    throw DomainError("drift_threshold: drift limit is not positive");
  const double L = static_cast<double>(p.pool_size);
  std::int64_t last_nonpositive = -1;
  for (std::int64_t K = 0;; ++K) {
    if (drift(K, p) <= 0.0) last_nonpositive = K;
    if (K > p.pool_size && L * alpha1(K, p.pool_size) < 1e-12) break;
  }
  return last_nonpositive + 1;
}

// ---------------------------------------------------------------------------
// ML detection-error bounds.
// ---------------------------------------------------------------------------

struct ErrorBoundInputs {
  std::vector<double> active_snr;   // P_k |h_k|^2 / N0 per active user
  std::vector<double> virtual_snr;  // assumed SNR per virtual (unused) preamble
  std::int64_t pool_size = 0;       // L
  std::int64_t active_count = 0;    // K

  /// Power-controlled case: every active and virtual user sees the same SNR.
  static ErrorBoundInputs uniform(double snr, std::int64_t L, std::int64_t K) {
    if (K < 1 || K >= L) throw ConfigError("active_count", "need 1 <= K < L");
    return {std::vector<double>(static_cast<std::size_t>(K), snr),
            std::vector<double>(static_cast<std::size_t>(L - K), snr), L, K};
  }
};

struct ErrorBounds {
  double p_md = 0.0;
  double p_fa = 0.0;
};

/// Pairwise ML error for a one-user difference at the given SNR: Q(sqrt(snr/2)).
inline double pairwise_error(double snr) {
  if (!(snr >= 0.0)) throw ConfigError("snr", "must be >= 0");
  return specfun::qfunc(std::sqrt(snr / 2.0));
}

/// Union bounds: mean pairwise error over active users (MD) and over
/// virtual users on unused preambles (FA).
inline ErrorBounds md_fa_bounds(const ErrorBoundInputs& e) {
  if (e.active_snr.empty()) throw ConfigError("active_snr", "must be nonempty");
  if (e.virtual_snr.empty()) throw ConfigError("virtual_snr", "must be nonempty");
  auto mean_error = [](std::span<const double> snrs) {
    double acc = 0.0;
    for (double s : snrs) acc += pairwise_error(s);
    return acc / static_cast<double>(snrs.size());
  };
  return {mean_error(e.active_snr), mean_error(e.virtual_snr)};
}

/// Support-recovery error with P_MD = P_FA = eps: approximately 1 - e^{-L eps}.
inline double perr_approx(std::int64_t L, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("eps", "must lie in [0, 1]");
  return -std::expm1(-static_cast<double>(L) * eps);
}

}  // namespace cra::analytic
