#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cra/params.hpp"
#include "cra/rng.hpp"

namespace cra::signal {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// N x L matrix of unit-norm preambles, one per column.
struct PreamblePool {
  CMatrix psi;

  std::int64_t length() const { return psi.rows(); }
  std::int64_t size() const { return psi.cols(); }
};

/// Circularly-symmetric complex Gaussian vector with covariance var * I.
inline CVector complex_gaussian(std::int64_t n, double var, Engine& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(var / 2.0));
  CVector v(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double re = g(rng);
    const double im = g(rng);
    v(i) = Complex(re, im);
  }
  return v;
}

/// i.i.d. CN(0, 1) columns normalized to unit Euclidean norm.
inline PreamblePool gen_pool(std::int64_t N, std::int64_t L, std::uint64_t seed) {
  if (N < 1) throw ConfigError("preamble_len", "must be >= 1");
  if (L < N) throw ConfigError("pool_size", "must be >= preamble_len");
  Engine rng = make_engine(seed, 0x9001);
  PreamblePool pool{CMatrix(N, L)};
  for (std::int64_t l = 0; l < L; ++l) {
    CVector col = complex_gaussian(N, 1.0, rng);
    while (col.norm() == 0.0) col = complex_gaussian(N, 1.0, rng);
    pool.psi.col(l) = col / col.norm();
  }
  return pool;
}

/**
 * Stage-1 scene: K active preambles with their received amplitudes
 * sqrt(P_k) h_k and the noise level. Optional data symbols (M x K) drive
 * the Stage-2 observations.
 */
struct SparseScene {
  std::vector<std::int64_t> support;
  std::vector<Complex> coefficients;
  double noise_var = 1.0;
  std::optional<CMatrix> data_symbols;

  void validate(std::int64_t L) const {
    if (coefficients.size() != support.size())
      throw ConfigError("coefficients", "one coefficient per support index required");
    if (static_cast<std::int64_t>(support.size()) > L)
      throw ConfigError("support", "more active preambles than the pool holds");
    std::vector<std::int64_t> sorted = support;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("support", "indices must be distinct");
    for (auto l : sorted)
      if (l < 0 || l >= L) throw ConfigError("support", "index out of range");
    if (!(noise_var > 0.0)) throw ConfigError("noise_var", "must be > 0");
    if (data_symbols && data_symbols->cols() != static_cast<Eigen::Index>(support.size()))
      throw ConfigError("data_symbols", "need one column per active user");
  }

  bool contains(std::int64_t l) const {
    return std::find(support.begin(), support.end(), l) != support.end();
  }

  /// The K-sparse length-L vector s.
  CVector sparse_vector(std::int64_t L) const {
    CVector s = CVector::Zero(L);
    for (std::size_t k = 0; k < support.size(); ++k) s(support[k]) = coefficients[k];
    return s;
  }
};

/// Scene whose users all have real positive amplitudes sqrt(snr * noise_var).
inline SparseScene scene_from_snr(std::vector<std::int64_t> support, const std::vector<double>& snr,
                                  double noise_var) {
  if (snr.size() != support.size()) throw ConfigError("snr", "one SNR per support index required");
  SparseScene s;
  s.support = std::move(support);
  s.noise_var = noise_var;
  for (double v : snr) {
    if (!(v >= 0.0)) throw ConfigError("snr", "must be >= 0");
    s.coefficients.emplace_back(std::sqrt(v * noise_var), 0.0);
  }
  return s;
}

/// y = Psi s + n, n ~ CN(0, N0 I).
inline CVector received_stage1(const PreamblePool& pool, const SparseScene& scene, Engine& rng) {
  scene.validate(pool.size());
  return pool.psi * scene.sparse_vector(pool.size()) +
         complex_gaussian(pool.length(), scene.noise_var, rng);
}

/// r_m = Psi s_m + n_m for m = 0..M-1, s_m carrying sqrt(P_k) h_k d_{k,m}
/// on the same support as s.
inline std::vector<CVector> received_stage2(const PreamblePool& pool, const SparseScene& scene,
                                            Engine& rng) {
  scene.validate(pool.size());
  if (!scene.data_symbols) throw ConfigError("data_symbols", "required for Stage-2 observations");
  const CMatrix& d = *scene.data_symbols;
  std::vector<CVector> out;
  out.reserve(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index m = 0; m < d.rows(); ++m) {
    CVector s_m = CVector::Zero(pool.size());
    for (std::size_t k = 0; k < scene.support.size(); ++k)
      s_m(scene.support[k]) = scene.coefficients[k] * d(m, static_cast<Eigen::Index>(k));
    out.push_back(pool.psi * s_m + complex_gaussian(pool.length(), scene.noise_var, rng));
  }
  return out;
}

/// [y; r_0; ...; r_{M-1}], length (1 + M) N.
inline CVector stack_observations(const CVector& y, const std::vector<CVector>& r) {
  Eigen::Index total = y.size();
  for (const auto& v : r) total += v.size();
  CVector out(total);
  out.head(y.size()) = y;
  Eigen::Index at = y.size();
  for (const auto& v : r) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

/// Count of trials in which an event occurred.
struct EmpiricalRate {
  std::int64_t events = 0;
  std::int64_t trials = 0;

  double rate() const { return trials ? static_cast<double>(events) / static_cast<double>(trials) : 0.0; }

  /// Binomial standard error at probability p (defaults to the observed rate).
  double std_error(std::optional<double> p = {}) const {
    if (trials == 0) return 0.0;
    const double q = p.value_or(rate());
    return std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
  }
};

namespace detail {

/// Fraction of noise draws in which the ML decision between the true s and
/// `alt` goes to `alt`. Exact residual ties (a zero amplitude difference)
/// are broken by a fair coin.
inline EmpiricalRate pairwise_trials(const PreamblePool& pool, const SparseScene& scene,
                                     const CVector& alt, Engine& rng, std::int64_t n_trials) {
  if (n_trials < 1) throw ConfigError("n_trials", "must be >= 1");
  const CVector clean = pool.psi * scene.sparse_vector(pool.size());
  const CVector alt_clean = pool.psi * alt;
  std::bernoulli_distribution coin(0.5);
  EmpiricalRate r;
  r.trials = n_trials;
  for (std::int64_t i = 0; i < n_trials; ++i) {
    const CVector y = clean + complex_gaussian(pool.length(), scene.noise_var, rng);
    const double true_residual = (y - clean).squaredNorm();
    const double alt_residual = (y - alt_clean).squaredNorm();
    if (true_residual > alt_residual || (true_residual == alt_residual && coin(rng))) ++r.events;
  }
  return r;
}

}  // namespace detail

/// ML pairwise missed-detection trial: the true s against the (K-1)-sparse
/// s'_k that drops the user on preamble `preamble`. Psi and s are fixed,
/// only the noise is redrawn. Converges to Q(sqrt(snr_k / 2)).
inline EmpiricalRate ml_md_trial(const PreamblePool& pool, const SparseScene& scene,
                                 std::int64_t preamble, Engine& rng, std::int64_t n_trials) {
  scene.validate(pool.size());
  if (!scene.contains(preamble)) throw ConfigError("preamble", "must be in the active support");
  CVector alt = scene.sparse_vector(pool.size());
  alt(preamble) = 0.0;
  return detail::pairwise_trials(pool, scene, alt, rng, n_trials);
}

/// ML pairwise false-alarm trial: the true s against the (K+1)-sparse
/// s'' that adds a virtual user on an unused preamble with amplitude
/// sqrt(virtual_snr * N0). Converges to Q(sqrt(virtual_snr / 2)).
inline EmpiricalRate ml_fa_trial(const PreamblePool& pool, const SparseScene& scene,
                                 std::int64_t virtual_index, double virtual_snr, Engine& rng,
                                 std::int64_t n_trials) {
  scene.validate(pool.size());
  if (virtual_index < 0 || virtual_index >= pool.size())
    throw ConfigError("virtual_index", "out of range");
  if (scene.contains(virtual_index))
    throw ConfigError("virtual_index", "must not be in the active support");
  if (!(virtual_snr >= 0.0)) throw ConfigError("virtual_snr", "must be >= 0");
  CVector alt = scene.sparse_vector(pool.size());
  alt(virtual_index) = std::sqrt(virtual_snr * scene.noise_var);
  return detail::pairwise_trials(pool, scene, alt, rng, n_trials);
}

/// Numerical rank: singular values above 1e-10 times the largest one.
inline std::int64_t matrix_rank(const CMatrix& a, double rel_tol = 1e-10) {
  if (a.size() == 0) return 0;
  const Eigen::VectorXd sv = Eigen::JacobiSVD<CMatrix>(a).singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  if (smax == 0.0) return 0;
  return static_cast<std::int64_t>((sv.array() > rel_tol * smax).count());
}

namespace detail {

/// Advances `idx` (strictly increasing, values < n) to the next k-combination.
inline bool next_combination(std::vector<std::int64_t>& idx, std::int64_t n) {
  const auto k = static_cast<std::int64_t>(idx.size());
  for (std::int64_t i = k - 1; i >= 0; --i) {
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::int64_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

inline CMatrix select_columns(const CMatrix& a, const std::vector<std::int64_t>& idx) {
  CMatrix sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
  return sub;
}

}  // namespace detail

inline constexpr std::int64_t kMaxSparkColumns = 24;

/**
 * Smallest number of linearly dependent columns, found by rank tests over
 * column subsets of increasing size. Returns L + 1 when every subset is
 * independent. Limited to L <= 24 columns.
 */
inline std::int64_t spark_bruteforce(const CMatrix& a) {
  const std::int64_t L = a.cols();
  if (L > kMaxSparkColumns) throw ConfigError("pool_size", "spark search limited to 24 columns");
  for (std::int64_t s = 1; s <= L; ++s) {
    if (s > a.rows()) return s;  // more columns than rows are always dependent
    std::vector<std::int64_t> idx(static_cast<std::size_t>(s));
    for (std::int64_t j = 0; j < s; ++j) idx[j] = j;
    do {
      if (matrix_rank(detail::select_columns(a, idx)) < s) return s;
    } while (detail::next_combination(idx, L));
  }
  return L + 1;
}

inline std::int64_t spark_bruteforce(const PreamblePool& pool) { return spark_bruteforce(pool.psi); }

/// MMV support-identifiability condition K < (spark - 1 + rank(S)) / 2.
inline bool mmv_identifiable(std::int64_t K, std::int64_t spark, std::int64_t rank_S) {
  if (spark < 1) throw ConfigError("spark", "must be >= 1");
  if (rank_S < 0) throw ConfigError("rank_S", "must be >= 0");
  return 2 * K < spark - 1 + rank_S;
}

inline constexpr std::int64_t kMaxExhaustivePool = 16;
inline constexpr std::int64_t kMaxExhaustiveUsers = 3;

/**
 * Exhaustive ML support detection with unknown amplitudes: the K-subset
 * whose least-squares fit leaves the smallest residual. Reference oracle
 * only (L <= 16, K <= 3); the returned support is sorted.
 */
inline std::vector<std::int64_t> ml_detect_support(const PreamblePool& pool, const CVector& y,
                                                   std::int64_t K) {
  const std::int64_t L = pool.size();
  if (L > kMaxExhaustivePool) throw ConfigError("pool_size", "exhaustive ML limited to L <= 16");
  if (K < 0 || K > kMaxExhaustiveUsers || K > L)
    throw ConfigError("active_count", "exhaustive ML limited to K <= 3");
  if (K == 0) return {};
  std::vector<std::int64_t> idx(static_cast<std::size_t>(K));
  for (std::int64_t j = 0; j < K; ++j) idx[j] = j;
  std::vector<std::int64_t> best;
  double best_residual = std::numeric_limits<double>::infinity();
  do {
    const CMatrix sub = detail::select_columns(pool.psi, idx);
    const CVector coef = sub.colPivHouseholderQr().solve(y);
    const double residual = (y - sub * coef).squaredNorm();
    if (residual < best_residual) {
      best_residual = residual;
      best = idx;
    }
  } while (detail::next_combination(idx, L));
  return best;
}

}  // namespace cra::signal
