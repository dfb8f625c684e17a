#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cra {

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/**
 * Scalar protocol constants shared by the closed forms and the simulator.
 *
 * All durations are in symbol units (symbol time normalized to 1); the
 * arrival rate is in users per symbol.
 */
struct ProtocolParams {
  std::int64_t preamble_len = 31;  // N, also the spreading gain
  std::int64_t payload_len = 256;  // M
  std::int64_t pool_size = 310;    // L
  double feedback_total = 4.0;     // tau, Feedback 1 + Feedback 2
  double arrival_rate = 1.0 / 287.0;
  double p_md = 0.01;
  double p_fa = 0.01;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const {
    if (preamble_len < 1) throw ConfigError("preamble_len", "must be >= 1");
    if (payload_len < 1) throw ConfigError("payload_len", "must be >= 1");
    if (pool_size < 2) throw ConfigError("pool_size", "must be >= 2");
    if (!(feedback_total >= 0.0) || !std::isfinite(feedback_total))
      throw ConfigError("feedback_total", "must be finite and >= 0");
    if (!(arrival_rate >= 0.0) || !std::isfinite(arrival_rate))
      throw ConfigError("arrival_rate", "must be finite and >= 0");
    if (!(p_md >= 0.0 && p_md <= 1.0)) throw ConfigError("p_md", "must lie in [0, 1]");
    if (!(p_fa >= 0.0 && p_fa <= 1.0)) throw ConfigError("p_fa", "must lie in [0, 1]");
    if (p_md + p_fa > 1.0 + 1e-15) throw ConfigError("p_fa", "p_md + p_fa must not exceed 1");
  }

  double preamble_time() const { return static_cast<double>(preamble_len); }
  double data_time() const { return static_cast<double>(payload_len); }
  /// Stage 1 plus both feedbacks: the fixed part of a CRA-2 session.
  double overhead_time() const { return preamble_time() + feedback_total; }
  /// Single-user transaction time N + M used for normalization.
  double transaction_time() const { return preamble_time() + data_time(); }
  double normalized_load() const { return arrival_rate * transaction_time(); }
  /// Fixed CRA-1 / multichannel ALOHA session length N + tau/2 + N M.
  double fixed_session_len() const {
    return preamble_time() + feedback_total / 2.0 + preamble_time() * data_time();
  }

  /// Sets the arrival rate from a load normalized by N + M.
  ProtocolParams& set_normalized_load(double load) {
    arrival_rate = load / transaction_time();
    return *this;
  }
};

/// Validated construction.
inline ProtocolParams make_params(std::int64_t preamble_len, std::int64_t payload_len,
                                  std::int64_t pool_size, double feedback_total,
                                  double arrival_rate, double p_md, double p_fa) {
  ProtocolParams p{preamble_len, payload_len, pool_size, feedback_total,
                   arrival_rate, p_md,        p_fa};
  p.validate();
  return p;
}

/// Parameters of the throughput-vs-load experiment: N=31, M=256, tau=4,
/// L=10N, P_MD=P_FA=0.01, at the given normalized load.
inline ProtocolParams reference_params(double normalized_load = 1.0) {
  ProtocolParams p;
  p.set_normalized_load(normalized_load);
  return p;
}

}  // namespace cra
