#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "cra/analytic.hpp"
#include "cra/sim.hpp"
#include "oracles.hpp"

using namespace cra;
using namespace cra::sim;

namespace {

SimConfig reference_config(Scheme scheme, double load, std::int64_t sessions) {
  SimConfig c;
  c.params = reference_params(load);
  c.scheme = scheme;
  c.n_sessions = sessions;
  c.warmup_sessions = std::min<std::int64_t>(1000, sessions / 10);
  return c;
}

void expect_consistent(const SessionTrace& t, std::int64_t L) {
  EXPECT_EQ(t.active, t.singleton + t.collided_users);
  EXPECT_EQ(t.occupied, t.singleton + t.multi);
  EXPECT_LE(t.occupied, std::min(t.active, L));
  EXPECT_GE(t.collided_users, 2 * t.multi);
  EXPECT_LE(t.detected_singleton, t.singleton);
  EXPECT_LE(t.detected_multi, t.multi);
  EXPECT_LE(t.false_slots, L - t.occupied);
  EXPECT_EQ(t.total_slots, t.detected_singleton + t.detected_multi + t.false_slots);
  EXPECT_LE(t.successes, t.detected_singleton);
}

}  // namespace

TEST(Session, SingleUserIsServed) {
  auto p = reference_params(1.0);
  p.p_md = 0.0;
  p.p_fa = 0.0;
  Engine rng = make_engine(3);
  ChainState ws;
  const auto t = session_with_active(Scheme::Cra2, 1, p, rng, ws);
  EXPECT_EQ(t.total_slots, 1);
  EXPECT_EQ(t.successes, 1);
  EXPECT_DOUBLE_EQ(t.length, p.overhead_time() + p.data_time());
  const auto e = session_with_active(Scheme::Cra2, 0, p, rng, ws);
  EXPECT_EQ(e.total_slots, 0);
  EXPECT_DOUBLE_EQ(e.length, p.overhead_time());
}

TEST(Session, SharedPreambleGivesCollisionSlot) {
  auto p = reference_params(1.0);
  p.pool_size = 2;
  p.p_md = 0.0;
  p.p_fa = 0.0;
  Engine rng = make_engine(5);
  ChainState ws;
  int seen = 0;
  for (int i = 0; i < 200; ++i) {
    const auto t = session_with_active(Scheme::Cra2, 2, p, rng, ws);
    expect_consistent(t, 2);
    if (t.multi == 1) {
      ++seen;
      EXPECT_EQ(t.total_slots, 1);
      EXPECT_EQ(t.detected_multi, 1);
      EXPECT_EQ(t.successes, 0);
    } else {
      EXPECT_EQ(t.successes, 2);
    }
  }
  EXPECT_GT(seen, 50);
}

TEST(Session, AllPreamblesFalselyDetected) {
  auto p = reference_params(1.0);
  p.p_md = 0.0;
  p.p_fa = 1.0;
  Engine rng = make_engine(9);
  ChainState ws;
  const auto t = session_with_active(Scheme::Cra2, 7, p, rng, ws);
  EXPECT_EQ(t.total_slots, p.pool_size);
}

TEST(Session, Cra1UserCap) {
  auto p = reference_params(1.0);
  p.p_md = 0.0;
  p.p_fa = 0.0;
  p.pool_size = 1000000;
  Engine rng = make_engine(1);
  ChainState ws;
  EXPECT_EQ(session_with_active(Scheme::Cra1, 1, p, rng, ws).successes, 1);
  EXPECT_EQ(session_with_active(Scheme::Cra1, p.preamble_len, p, rng, ws).successes, 0);
  const auto under = session_with_active(Scheme::Cra1, p.preamble_len - 1, p, rng, ws);
  EXPECT_EQ(under.successes, under.singleton);
  EXPECT_DOUBLE_EQ(under.length, p.fixed_session_len());
}

TEST(Session, AlohaServesDistinctChannels) {
  auto p = reference_params(1.0);
  p.preamble_len = 3;
  p.p_md = 0.0;
  p.p_fa = 0.0;
  Engine rng = make_engine(4);
  ChainState ws;
  int distinct = 0;
  for (int i = 0; i < 500; ++i) {
    const auto t = session_with_active(Scheme::MultichannelAloha, 3, p, rng, ws);
    expect_consistent(t, 3);
    if (t.singleton == 3) {
      ++distinct;
      EXPECT_EQ(t.successes, 3);
    }
    EXPECT_EQ(session_with_active(Scheme::MultichannelAloha, 4, p, rng, ws).successes, 0);
  }
  EXPECT_GT(distinct, 60);
}

TEST(Session, AccountingHoldsOnBothSamplingPaths) {
  const auto p = reference_params(1.0);
  Engine rng = make_engine(77);
  ChainState ws;
  for (std::int64_t K : {0, 1, 3, 50, 309, 310, 311, 1000, 100000}) {
    for (int i = 0; i < 50; ++i) expect_consistent(session_with_active(Scheme::Cra2, K, p, rng, ws), 310);
  }
}

TEST(Session, ConditionalMeansMatchDetectionMeans) {
  const auto p = reference_params(1.0);
  Engine rng = make_engine(123);
  ChainState ws;
  for (std::int64_t K : {1, 5, 20, 100, 1000}) {
    const int n = K >= 1000 ? 200000 : 1000000;
    double s[3] = {0, 0, 0}, ss[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) {
      const auto t = session_with_active(Scheme::Cra2, K, p, rng, ws);
      const double v[3] = {double(t.detected_singleton), double(t.detected_multi), double(t.false_slots)};
      for (int j = 0; j < 3; ++j) {
        s[j] += v[j];
        ss[j] += v[j] * v[j];
      }
    }
    const auto m = analytic::lemma1_means(K, p);
    const double want[3] = {m.singleton, m.collided, m.false_alarm};
    for (int j = 0; j < 3; ++j) {
      const double mean = s[j] / n;
      const double se = std::sqrt(std::max(ss[j] / n - mean * mean, 0.0) / n);
      EXPECT_LE(std::abs(mean - want[j]), 4.0 * se + 1e-12) << "K=" << K << " j=" << j;
    }
  }
}

namespace {

double binomial_tv(const std::vector<double>& law, int L, double a) {
  double tv = 0.0;
  for (int b = 0; b <= L; ++b) {
    const double pmf = std::exp(std::lgamma(L + 1.0) - std::lgamma(b + 1.0) - std::lgamma(L - b + 1.0) +
                                b * std::log(a) + (L - b) * std::log1p(-a));
    tv += std::abs(law[static_cast<std::size_t>(b)] - pmf);
  }
  return 0.5 * tv;
}

}  // namespace

TEST(Session, SingletonCountFollowsExactOccupancyLaw) {
  for (auto [K, L] : {std::pair{8, 64}, std::pair{64, 64}, std::pair{200, 64}}) {
    auto p = reference_params(1.0);
    p.pool_size = L;
    Engine rng = make_engine(static_cast<std::uint64_t>(K * 1000 + L));
    ChainState ws;
    const int n = 400000;
    std::vector<double> freq(static_cast<std::size_t>(L) + 1, 0.0);
    for (int i = 0; i < n; ++i)
      freq[static_cast<std::size_t>(session_with_active(Scheme::Cra2, K, p, rng, ws).singleton)] += 1.0 / n;
    const auto exact = oracle::singleton_distribution(K, L);
    double tv = 0.0;
    for (std::size_t b = 0; b < exact.size(); ++b) tv += 0.5 * std::abs(freq[b] - exact[b]);
    EXPECT_LT(tv, 0.01) << "K=" << K << " L=" << L;
  }
}

TEST(Session, BinomialSingletonApproximationCalibration) {
  // Treating the per-preamble singleton indicators as independent gives
  // B1 ~ Binomial(L, alpha1). The means agree exactly; the laws agree
  // closely only near K = L, and drift apart as K/L shrinks because B1
  // concentrates at K while the binomial spreads like Poisson(K).
  const int L = 64;
  std::vector<double> tv;
  for (int K : {4, 8, 16, 32, 64}) {
    const auto law = oracle::singleton_distribution(K, L);
    double mean = 0.0;
    for (int b = 0; b <= L; ++b) mean += b * law[static_cast<std::size_t>(b)];
    EXPECT_NEAR(mean, L * analytic::alpha1(K, L), 1e-10);
    tv.push_back(binomial_tv(law, L, analytic::alpha1(K, L)));
  }
  EXPECT_LT(tv.back(), 0.01);
  for (std::size_t i = 1; i < tv.size(); ++i) EXPECT_LT(tv[i], tv[i - 1]);
  EXPECT_GT(tv.front(), 0.5);
}

TEST(Config, Validation) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.warmup_sessions = c.n_sessions;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.initial_backlog = 5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "initial_backlog");
  }
  c.mode = Mode::FastRetrial;
  EXPECT_NO_THROW(c.validate());
  c.batches = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_scheme("cra3"), ConfigError);
  EXPECT_EQ(parse_mode("fast_retrial"), Mode::FastRetrial);
  EXPECT_EQ(parse_scheme(to_string(Scheme::MultichannelAloha)), Scheme::MultichannelAloha);
}

TEST(Estimate, ZeroLoadGivesZeroThroughput) {
  for (Scheme s : {Scheme::Cra1, Scheme::Cra2, Scheme::MultichannelAloha}) {
    auto c = reference_config(s, 1.0, 2000);
    c.params.arrival_rate = 0.0;
    const auto e = estimate_throughput(c);
    EXPECT_EQ(e.mean_throughput, 0.0);
    EXPECT_EQ(e.mean_K, 0.0);
    EXPECT_GT(e.total_time, 0.0);
  }
}

TEST(Estimate, DeterministicPerSeed) {
  const auto c = reference_config(Scheme::Cra2, 1.0, 20000);
  const auto a = estimate_throughput(c);
  const auto b = estimate_throughput(c);
  EXPECT_EQ(a.mean_throughput, b.mean_throughput);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.mean_D, b.mean_D);
  EXPECT_EQ(a.total_time, b.total_time);
  auto c2 = c;
  c2.seed = 2;
  EXPECT_NE(estimate_throughput(c2).mean_throughput, a.mean_throughput);
}

TEST(Estimate, Cra2AgreesWithSteadyState) {
  const auto c = reference_config(Scheme::Cra2, 0.6, 200000);
  const auto e = estimate_throughput(c);
  const auto s = analytic::throughput_cra2(c.params);
  EXPECT_LE(std::abs(e.mean_throughput - s.eta2), 4.0 * e.std_error);
  EXPECT_LE(std::abs(e.mean_K - s.beta2), 4.0 * e.mean_K_std_error);
  EXPECT_LE(std::abs(e.mean_D - s.d_bar), 4.0 * e.mean_D_std_error);
}

TEST(Estimate, Cra2MatchesExactStationaryChain) {
  for (double load : {0.6, 1.0}) {
    const auto c = reference_config(Scheme::Cra2, load, 200000);
    const auto e = estimate_throughput(c);
    const auto exact = oracle::stationary_cra2(c.params);
    EXPECT_LE(std::abs(e.mean_K - exact.mean_K), 4.0 * e.mean_K_std_error) << load;
    EXPECT_LE(std::abs(e.mean_D - exact.mean_D), 4.0 * e.mean_D_std_error) << load;
    EXPECT_LE(std::abs(e.mean_throughput - exact.throughput), 4.0 * e.std_error) << load;
  }
}

TEST(Stability, ZeroLoadStaysEmpty) {
  auto c = reference_config(Scheme::Cra2, 1.0, 1000);
  c.mode = Mode::FastRetrial;
  c.params.arrival_rate = 0.0;
  for (auto z : simulate_stability(c, 1000)) ASSERT_EQ(z, 0);
  c.mode = Mode::Drop;
  EXPECT_THROW(simulate_stability(c, 10), ConfigError);
}

TEST(Stability, LightLoadKeepsReturningToZero) {
  auto c = reference_config(Scheme::Cra2, 0.2, 1000);
  c.mode = Mode::FastRetrial;
  const auto z = simulate_stability(c, 100000);
  std::int64_t zeros = 0, last_zero = -1;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] == 0) {
      ++zeros;
      last_zero = static_cast<std::int64_t>(i);
    }
  }
  EXPECT_GT(zeros, 10000);
  EXPECT_GT(last_zero, 99000);
}

TEST(Stability, OneStepIncrementMatchesDrift) {
  // K(t+1) - K(t) = Poisson(lambda Y) - successes, averaged from a forced K.
  const auto p = reference_params(1.0);
  Engine rng = make_engine(31);
  ChainState ws;
  for (std::int64_t K : {10, 100, 1000}) {
    const int n = 200000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto t = session_with_active(Scheme::Cra2, K, p, rng, ws);
      const double fresh = static_cast<double>(
          std::poisson_distribution<std::int64_t>(p.arrival_rate * t.length)(rng));
      const double inc = fresh - static_cast<double>(t.successes);
      s += inc;
      ss += inc * inc;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - analytic::drift(K, p)), 4.0 * se) << "K=" << K;
  }
}

TEST(Stability, HeavyLoadGrows) {
  auto c = reference_config(Scheme::Cra2, 3.0, 1000);
  c.mode = Mode::FastRetrial;
  c.initial_backlog = 100;
  const auto z = simulate_stability(c, 2000);
  EXPECT_GT(z.back(), 100000);
}
