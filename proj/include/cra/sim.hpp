#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cra/params.hpp"
#include "cra/rng.hpp"

namespace cra::sim {

enum class Scheme { Cra1, Cra2, MultichannelAloha };
enum class Mode { Drop, FastRetrial };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::Cra1: return "cra1";
    case Scheme::Cra2: return "cra2";
    case Scheme::MultichannelAloha: return "maloha";
  }
  return "?";
}

inline std::string_view to_string(Mode m) {
  return m == Mode::Drop ? "drop" : "fast_retrial";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "cra1") return Scheme::Cra1;
  if (s == "cra2") return Scheme::Cra2;
  if (s == "maloha") return Scheme::MultichannelAloha;
  throw ConfigError("scheme", "unknown scheme '" + std::string(s) + "' (cra1|cra2|maloha)");
}

inline Mode parse_mode(std::string_view s) {
  if (s == "drop") return Mode::Drop;
  if (s == "fast_retrial") return Mode::FastRetrial;
  throw ConfigError("mode", "unknown mode '" + std::string(s) + "' (drop|fast_retrial)");
}

/// Outcome of one session.
struct SessionTrace {
  std::int64_t index = 0;
  std::int64_t active = 0;              // K
  std::int64_t occupied = 0;            // B = B1 + B2
  std::int64_t singleton = 0;           // B1
  std::int64_t multi = 0;               // B2
  std::int64_t collided_users = 0;      // users sharing a preamble
  std::int64_t detected_singleton = 0;  // D1
  std::int64_t detected_multi = 0;      // D2
  std::int64_t false_slots = 0;         // D3
  std::int64_t total_slots = 0;         // D
  double length = 0.0;                  // Y, symbols
  std::int64_t successes = 0;
  std::int64_t backlog = 0;             // Z = K - successes, fast retrial only
};

struct SimConfig {
  ProtocolParams params;
  Scheme scheme = Scheme::Cra2;
  Mode mode = Mode::Drop;
  std::int64_t n_sessions = 100000;
  std::int64_t warmup_sessions = 1000;
  std::uint64_t seed = 1;
  /// Users already waiting before the first session (fast retrial only).
  std::int64_t initial_backlog = 0;
  /// Batch count for the batch-means standard error.
  std::int64_t batches = 32;
  /// Largest K for which the fixed-length schemes decode; defaults to N-1
  /// for CRA-1 and N for multichannel ALOHA. Negative disables the cap.
  std::optional<std::int64_t> user_cap;

  void validate() const {
    if (scheme == Scheme::MultichannelAloha) {
      ProtocolParams q = params;
      q.pool_size = std::max<std::int64_t>(2, q.pool_size);
      q.validate();
    } else {
      params.validate();
    }
    if (n_sessions < 1) throw ConfigError("n_sessions", "must be >= 1");
    if (warmup_sessions < 0 || warmup_sessions >= n_sessions)
      throw ConfigError("warmup_sessions", "must satisfy 0 <= warmup_sessions < n_sessions");
    if (batches < 2) throw ConfigError("batches", "must be >= 2");
    if (initial_backlog < 0) throw ConfigError("initial_backlog", "must be >= 0");
    if (initial_backlog > 0 && mode != Mode::FastRetrial)
      throw ConfigError("initial_backlog", "a backlog only exists in fast_retrial mode");
  }
};

inline std::int64_t default_user_cap(Scheme s, std::int64_t N) {
  switch (s) {
    case Scheme::Cra1: return N - 1;
    case Scheme::MultichannelAloha: return N;
    case Scheme::Cra2: return -1;
  }
  return -1;
}

/// Mutable state carried from one session to the next, plus scratch space.
struct ChainState {
  std::int64_t index = 0;
  double last_length = 0.0;
  std::int64_t backlog = 0;
  std::vector<std::int64_t> counts;   // per-preamble user counts
  std::vector<std::int64_t> touched;  // preambles to reset
};

namespace detail {

inline std::int64_t draw_poisson(double mean, Engine& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

inline std::int64_t draw_binomial(std::int64_t n, double p, Engine& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::int64_t>(n, p)(rng);
}

inline void tally(std::int64_t count, SessionTrace& t) {
  if (count == 1) {
    ++t.singleton;
  } else if (count >= 2) {
    ++t.multi;
    t.collided_users += count;
  }
}

}  // namespace detail

/**
 * Draws the preamble choices of K users over L preambles, then the Stage-1
 * detection outcome: every used preamble is detected independently with
 * probability 1 - P_MD, every unused one falsely detected with P_FA.
 *
 * Users are placed one by one when K <= L; larger populations use the
 * equivalent multinomial draw through sequential conditional binomials.
 * Fills the occupancy and detection fields; length, successes and backlog
 * are left to the caller.
 */
inline SessionTrace resolve_preambles(std::int64_t K, std::int64_t L, double p_md, double p_fa,
                                      Engine& rng, ChainState& ws) {
  SessionTrace t;
  t.active = K;
  if (K <= L) {
    if (ws.counts.size() != static_cast<std::size_t>(L))
      ws.counts.assign(static_cast<std::size_t>(L), 0);
    ws.touched.clear();
    std::uniform_int_distribution<std::int64_t> pick(0, L - 1);
    for (std::int64_t k = 0; k < K; ++k) {
      const auto l = pick(rng);
      if (ws.counts[static_cast<std::size_t>(l)]++ == 0) ws.touched.push_back(l);
    }
    for (auto l : ws.touched) {
      detail::tally(ws.counts[static_cast<std::size_t>(l)], t);
      ws.counts[static_cast<std::size_t>(l)] = 0;
    }
  } else {
    std::int64_t remaining = K;
    for (std::int64_t l = 0; l < L; ++l) {
      const std::int64_t c =
          (l == L - 1) ? remaining
                       : detail::draw_binomial(remaining, 1.0 / static_cast<double>(L - l), rng);
      remaining -= c;
      detail::tally(c, t);
    }
  }
  t.occupied = t.singleton + t.multi;
  t.detected_singleton = detail::draw_binomial(t.singleton, 1.0 - p_md, rng);
  t.detected_multi = detail::draw_binomial(t.multi, 1.0 - p_md, rng);
  t.false_slots = detail::draw_binomial(L - t.occupied, p_fa, rng);
  t.total_slots = t.detected_singleton + t.detected_multi + t.false_slots;
  return t;
}

/// Neutral first-session length T~P + T_D round(L (1 - e^{-lambda_T / L})).
inline double bootstrap_length(const ProtocolParams& p) {
  const double L = static_cast<double>(p.pool_size);
  return p.overhead_time() +
         p.data_time() * std::round(L * (-std::expm1(-p.normalized_load() / L)));
}

inline ChainState initial_state(const SimConfig& cfg) {
  ChainState s;
  s.last_length = cfg.scheme == Scheme::Cra2 ? bootstrap_length(cfg.params)
                                             : cfg.params.fixed_session_len();
  s.backlog = cfg.initial_backlog;
  return s;
}

namespace detail {

inline void finish(SessionTrace& t, ChainState& state, Mode mode) {
  t.index = state.index++;
  t.backlog = mode == Mode::FastRetrial ? t.active - t.successes : 0;
  state.backlog = t.backlog;
  state.last_length = t.length;
}

inline std::int64_t arrivals(double window, const ProtocolParams& p, const ChainState& state,
                             Mode mode, Engine& rng) {
  const std::int64_t fresh = draw_poisson(p.arrival_rate * window, rng);
  return mode == Mode::FastRetrial ? fresh + state.backlog : fresh;
}

}  // namespace detail

/**
 * One session with a given number of active users. Applies the scheme's
 * success rule and session length; the chain state is only used as
 * scratch space.
 *
 *   CRA-2: one data slot per detected preamble, success on detected
 *          singletons, Y = T~P + T_D D.
 *   CRA-1: fixed Y = N + tau/2 + N M; MUD recovers the detected singletons
 *          only when K <= cap (N - 1 by default).
 *   Multichannel ALOHA: L = N orthogonal preambles, fixed Y, at most N
 *          simultaneously active users decodable by default.
 */
inline SessionTrace session_with_active(Scheme scheme, std::int64_t K, const ProtocolParams& p,
                                        Engine& rng, ChainState& ws,
                                        std::optional<std::int64_t> cap = {}) {
  const std::int64_t L = scheme == Scheme::MultichannelAloha ? p.preamble_len : p.pool_size;
  SessionTrace t = resolve_preambles(K, L, p.p_md, p.p_fa, rng, ws);
  if (scheme == Scheme::Cra2) {
    t.successes = t.detected_singleton;
    t.length = p.overhead_time() + p.data_time() * static_cast<double>(t.total_slots);
  } else {
    const std::int64_t limit = cap.value_or(default_user_cap(scheme, p.preamble_len));
    t.successes = (limit < 0 || K <= limit) ? t.detected_singleton : 0;
    t.length = p.fixed_session_len();
  }
  return t;
}

namespace detail {

inline SessionTrace chain_step(Scheme scheme, ChainState& state, const ProtocolParams& p,
                               Mode mode, Engine& rng, std::optional<std::int64_t> cap) {
  const double window = scheme == Scheme::Cra2 ? state.last_length : p.fixed_session_len();
  const std::int64_t K = arrivals(window, p, state, mode, rng);
  SessionTrace t = session_with_active(scheme, K, p, rng, state, cap);
  finish(t, state, mode);
  return t;
}

}  // namespace detail

/// CRA-2 session; arrivals accumulate over the previous session's length.
inline SessionTrace run_session_cra2(ChainState& state, const ProtocolParams& p, Mode mode,
                                     Engine& rng) {
  return detail::chain_step(Scheme::Cra2, state, p, mode, rng, {});
}

/// CRA-1 session; arrivals accumulate over the fixed session length.
inline SessionTrace run_session_cra1(ChainState& state, const ProtocolParams& p, Mode mode,
                                     Engine& rng, std::optional<std::int64_t> cap = {}) {
  return detail::chain_step(Scheme::Cra1, state, p, mode, rng, cap);
}

/// Multichannel ALOHA session.
inline SessionTrace run_session_maloha(ChainState& state, const ProtocolParams& p, Mode mode,
                                       Engine& rng, std::optional<std::int64_t> cap = {}) {
  return detail::chain_step(Scheme::MultichannelAloha, state, p, mode, rng, cap);
}

inline SessionTrace run_session(const SimConfig& cfg, ChainState& state, Engine& rng) {
  switch (cfg.scheme) {
    case Scheme::Cra1: return run_session_cra1(state, cfg.params, cfg.mode, rng, cfg.user_cap);
    case Scheme::Cra2: return run_session_cra2(state, cfg.params, cfg.mode, rng);
    case Scheme::MultichannelAloha:
      return run_session_maloha(state, cfg.params, cfg.mode, rng, cfg.user_cap);
  }
  return {};
}

struct ThroughputEstimate {
  double mean_throughput = 0.0;  // successes per symbol, ratio estimator
  double std_error = 0.0;        // batch means
  std::int64_t sessions_run = 0;
  double total_time = 0.0;
  double mean_D = 0.0;
  double mean_D_std_error = 0.0;
  double mean_K = 0.0;
  double mean_K_std_error = 0.0;
  double mean_session_len = 0.0;
};

namespace detail {

struct BatchStats {
  std::vector<double> values;

  void add(double v) { values.push_back(v); }

  double std_error() const {
    const auto n = static_cast<double>(values.size());
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (n - 1.0) / n);
  }
};

}  // namespace detail

/**
 * Runs warmup_sessions unrecorded sessions, then n_sessions measured ones,
 * and reports sum(successes) / sum(Y) with a batch-means standard error.
 * Bit-reproducible for a given seed.
 */
inline ThroughputEstimate estimate_throughput(const SimConfig& cfg) {
  cfg.validate();
  Engine rng = make_engine(cfg.seed);
  ChainState state = initial_state(cfg);
  for (std::int64_t i = 0; i < cfg.warmup_sessions; ++i) run_session(cfg, state, rng);

  const std::int64_t n = cfg.n_sessions;
  const std::int64_t nb = std::min(cfg.batches, n);
  detail::BatchStats rate, slots, active;
  double succ_total = 0.0, len_total = 0.0, d_total = 0.0, k_total = 0.0;

  std::int64_t done = 0;
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::int64_t end = (b + 1) * n / nb;
    double succ = 0.0, len = 0.0, d = 0.0, k = 0.0;
    const std::int64_t count = end - done;
    for (; done < end; ++done) {
      const SessionTrace t = run_session(cfg, state, rng);
      succ += static_cast<double>(t.successes);
      len += t.length;
      d += static_cast<double>(t.total_slots);
      k += static_cast<double>(t.active);
    }
    rate.add(succ / len);
    slots.add(d / static_cast<double>(count));
    active.add(k / static_cast<double>(count));
    succ_total += succ;
    len_total += len;
    d_total += d;
    k_total += k;
  }

  ThroughputEstimate e;
  e.sessions_run = n;
  e.total_time = len_total;
  e.mean_throughput = succ_total / len_total;
  e.std_error = rate.std_error();
  e.mean_D = d_total / static_cast<double>(n);
  e.mean_D_std_error = slots.std_error();
  e.mean_K = k_total / static_cast<double>(n);
  e.mean_K_std_error = active.std_error();
  e.mean_session_len = len_total / static_cast<double>(n);
  return e;
}

/// Full per-session traces of a fast-retrial chain, no warmup.
inline std::vector<SessionTrace> run_chain(const SimConfig& cfg, std::int64_t horizon) {
  cfg.validate();
  if (horizon < 0) throw ConfigError("horizon", "must be >= 0");
  Engine rng = make_engine(cfg.seed);
  ChainState state = initial_state(cfg);
  std::vector<SessionTrace> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t i = 0; i < horizon; ++i) out.push_back(run_session(cfg, state, rng));
  return out;
}

/// Backlog trajectory Z(1..horizon) under fast retrial: users not served in
/// a session re-enter the next one with a fresh preamble choice.
inline std::vector<std::int64_t> simulate_stability(const SimConfig& cfg, std::int64_t horizon) {
  if (cfg.mode != Mode::FastRetrial)
    throw ConfigError("mode", "stability runs require fast_retrial");
  const auto traces = run_chain(cfg, horizon);
  std::vector<std::int64_t> backlog;
  backlog.reserve(traces.size());
  for (const auto& t : traces) backlog.push_back(t.backlog);
  return backlog;
}

}  // namespace cra::sim
