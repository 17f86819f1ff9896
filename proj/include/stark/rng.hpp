#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stark/common.hpp"

namespace stark {

/// Algorithm identifier recorded in report provenance blocks.
inline constexpr const char* kPrngId = "splitmix64";

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Seed of the substream addressed by (seed, key); independent of draw history.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return detail::mix64(seed ^ (0x9e3779b97f4a7c15ull * (key + 1)));
}

/// Counter-derived splitmix64 stream. Streams obtained through `stream(key)`
/// depend only on (seed, key), never on how many draws were made, so
/// per-pixel / per-repeat work can run in any order or thread count and still
/// reproduce bit-identical results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(detail::mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng stream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0,1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1); safe as a log() argument.
  double next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in {0, ..., n-1}, rejection-debiased.
  std::int64_t next_below(std::int64_t n) {
    if (n <= 0) throw validation_error("next_below: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0ull - un) % un;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return static_cast<std::int64_t>(r % un);
    }
  }

  double normal() {
    const double u1 = next_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang, boosted for alpha < 1.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw validation_error("gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double u = next_open();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = next_open();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  Vector dirichlet(Index d, double alpha) {
    Vector out(d);
    double sum = 0.0;
    for (Index j = 0; j < d; ++j) {
      out(j) = gamma(alpha);
      sum += out(j);
    }
    if (sum <= 0.0) return Vector::Constant(d, 1.0 / static_cast<double>(d));
    out /= sum;
    return out;
  }

  /// Binomial(n, p) by CDF inversion. Large n is handled by additivity:
  /// chunks are sized so the starting pmf never underflows a double.
  std::int64_t binomial(std::int64_t n, double p) {
    if (n < 0) throw validation_error("binomial: n must be nonnegative");
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (p > 0.5) return n - binomial(n, 1.0 - p);
    const double log_q = std::log1p(-p);
    const auto max_chunk = static_cast<std::int64_t>(600.0 / -log_q);
    std::int64_t total = 0;
    std::int64_t remaining = n;
    while (remaining > 0) {
      const std::int64_t chunk = std::min(remaining, std::max<std::int64_t>(max_chunk, 1));
      total += binomial_small(chunk, p, log_q);
      remaining -= chunk;
    }
    return total;
  }

  /// Poisson(lambda), exact via additivity over chunks small enough for the
  /// multiplicative method.
  std::int64_t poisson(double lambda) {
    if (!(lambda >= 0.0)) throw validation_error("poisson: lambda must be nonnegative");
    std::int64_t total = 0;
    while (lambda > 500.0) {
      total += poisson_small(500.0);
      lambda -= 500.0;
    }
    return total + poisson_small(lambda);
  }

  /// Hypergeometric: number of marked items in a size-`draws` sample without
  /// replacement from a population with `successes` marked out of `population`.
  std::int64_t hypergeometric(std::int64_t draws, std::int64_t successes, std::int64_t population) {
    if (population < 0 || successes < 0 || draws < 0 || successes > population || draws > population)
      throw validation_error("hypergeometric: invalid parameters");
    const std::int64_t lo = std::max<std::int64_t>(0, draws - (population - successes));
    const std::int64_t hi = std::min(draws, successes);
    if (lo >= hi) return lo;
    const double lp0 = log_pmf_hypergeometric(lo, draws, successes, population);
    const double u = next_double();
    std::int64_t k = lo;
    double lp = lp0;
    // Skip the left tail while its mass is below double range.
    while (k < hi && lp < -700.0) {
      lp += std::log(static_cast<double>(successes - k)) + std::log(static_cast<double>(draws - k)) -
            std::log(static_cast<double>(k + 1)) -
            std::log(static_cast<double>(population - successes - draws + k + 1));
      ++k;
    }
    double pmf = std::exp(lp);
    double cum = pmf;
    while (u > cum && k < hi) {
      const double ratio = (static_cast<double>(successes - k) * static_cast<double>(draws - k)) /
                           (static_cast<double>(k + 1) *
                            static_cast<double>(population - successes - draws + k + 1));
      pmf *= ratio;
      ++k;
      cum += pmf;
    }
    return k;
  }

  /// Multinomial(n, probs) through the conditional-binomial sequential method.
  std::vector<std::int64_t> multinomial(std::int64_t n, const Vector& probs) {
    const Index d = probs.size();
    std::vector<std::int64_t> out(static_cast<std::size_t>(d), 0);
    std::int64_t remaining = n;
    double mass = 1.0;
    for (Index j = 0; j + 1 < d && remaining > 0; ++j) {
      const double pj = probs(j);
      double cond = mass > 0.0 ? pj / mass : 1.0;
      if (cond > 1.0) cond = 1.0;
      if (cond < 0.0) cond = 0.0;
      const std::int64_t x = binomial(remaining, cond);
      out[static_cast<std::size_t>(j)] = x;
      remaining -= x;
      mass -= pj;
    }
    if (d > 0) out[static_cast<std::size_t>(d - 1)] += remaining;
    return out;
  }

 private:
  std::int64_t binomial_small(std::int64_t n, double p, double log_q) {
    const double u = next_double();
    double pmf = std::exp(static_cast<double>(n) * log_q);
    double cum = pmf;
    std::int64_t k = 0;
    const double odds = p / (1.0 - p);
    while (u > cum && k < n) {
      pmf *= static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
      ++k;
      cum += pmf;
    }
    return k;
  }

  std::int64_t poisson_small(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::int64_t k = 0;
    double prod = next_open();
    while (prod > limit) {
      prod *= next_open();
      ++k;
    }
    return k;
  }

  static double log_pmf_hypergeometric(std::int64_t k, std::int64_t n, std::int64_t m,
                                       std::int64_t big_n) {
    auto lbinom = [](std::int64_t a, std::int64_t b) {
      return std::lgamma(static_cast<double>(a + 1)) - std::lgamma(static_cast<double>(b + 1)) -
             std::lgamma(static_cast<double>(a - b + 1));
    };
    return lbinom(m, k) + lbinom(big_n - m, n - k) - lbinom(big_n, n);
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace stark
