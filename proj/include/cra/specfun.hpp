#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cra {

/// Raised when a closed form is evaluated outside its real domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace specfun {

inline constexpr double kInvE = 0.36787944117144232160;  // 1/e
inline constexpr double kBranchTolerance = 1e-12;

/**
 * Principal branch W0 of the Lambert W function, the inverse of w -> w e^w
 * on w >= -1.
 *
 * Arguments in [-1/e - 1e-12, -1/e] are clamped onto the branch point.
 * Anything below that has no real solution and throws DomainError.
 *
 * Halley iteration from a branch-point series (y near -1/e), the Winitzki
 * approximation (moderate y) or the asymptotic log expansion (large y);
 * stops when the relative step falls below 1e-14, at most 50 iterations.
 */
inline double lambert_w0(double y) {
  if (std::isnan(y)) throw DomainError("lambert_w0: NaN argument");
  if (y < -kInvE - kBranchTolerance)
    throw DomainError("lambert_w0: argument " + std::to_string(y) + " below -1/e");
  if (y <= -kInvE) return -1.0;
  if (y == 0.0) return 0.0;
  if (std::isinf(y)) return y;

  double w;
  if (y < -0.25) {
    const double p = std::sqrt(2.0 * (std::numbers::e * y + 1.0));
    w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)));
  } else if (y < 3.0) {
    const double l = std::log1p(y);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(y);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }

  for (int iter = 0; iter < 50; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - y;
    const double wp1 = w + 1.0;
    if (f == 0.0 || wp1 == 0.0) break;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= 1e-14 * std::abs(w)) break;
  }
  return std::max(w, -1.0);
}

/**
 * Poisson CDF: sum_{k=0}^{n} e^{-mu} mu^k / k!.
 *
 * The pmf is evaluated once in log space at min(n, floor(mu)) and the
 * remaining terms follow by ratio recurrence, so nothing overflows for
 * mu up to well beyond 1e4.
 */
inline double poisson_cdf(std::int64_t n, double mu) {
  if (!(mu >= 0.0)) throw DomainError("poisson_cdf: mean must be nonnegative");
  if (n < 0) return 0.0;
  if (mu == 0.0) return 1.0;

  const auto mode = static_cast<std::int64_t>(std::floor(mu));
  const std::int64_t anchor = std::min(n, mode);
  const double anchor_term =
      std::exp(-mu + static_cast<double>(anchor) * std::log(mu) -
               std::lgamma(static_cast<double>(anchor) + 1.0));

  double sum = anchor_term;
  double term = anchor_term;
  for (std::int64_t k = anchor; k > 0; --k) {
    term *= static_cast<double>(k) / mu;
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  term = anchor_term;
  for (std::int64_t k = anchor + 1; k <= n; ++k) {
    term *= mu / static_cast<double>(k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return std::min(sum, 1.0);
}

/// Gaussian tail probability Pr(Z > x), Z ~ N(0, 1).
inline double qfunc(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

}  // namespace specfun
}  // namespace cra
