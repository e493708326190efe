#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace marginlab {

/// Overflow-safe softplus(x) = log(1 + e^x).
///
/// Piecewise evaluation: x for x > 30, e^x for x < -30, log1p(e^x)
/// otherwise. The dropped tails are below 1e-13, well inside every
/// tolerance used by the loss equivalence checks. Rejects non-finite x.
double softplus(double x);

/// max(v) + log(sum(exp(v_i - max(v)))). Shift-invariant and safe for
/// entries of any magnitude. Rejects empty input.
double log_sum_exp(std::span<const double> values);

/// Softmax computed with the max-shift trick. Output is nonnegative and
/// sums to 1 within 1e-12. Rejects empty input.
std::vector<double> stable_softmax(std::span<const double> values);

/// Throws std::invalid_argument naming `what` if any element is NaN/inf.
void require_finite(std::span<const double> values, std::string_view what);
void require_finite(double value, std::string_view what);

/// Counter-based pseudo-random source.
///
/// Draw k is the splitmix64 finalizer applied to seed + (k+1) * 2^64/phi,
/// so the stream is a pure function of (seed, draw index): equal seeds
/// reproduce equal sequences, and any implementation of the same recipe
/// reproduces them too. Not thread-safe; concurrent users split streams
/// with derive_seed.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Next raw 64-bit draw; advances the counter.
  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double next_uniform();

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t next_index(std::uint64_t bound);

  /// One N(mean, stddev^2) draw via Box-Muller (two uniforms per draw,
  /// no caching, so draw k always consumes counters 2k and 2k+1 of its
  /// own stream position). stddev must be >= 0.
  double next_normal(double mean, double stddev);

  /// Deterministic child seed for stream `stream` of `seed`. Used to give
  /// independent generators to init, per-epoch shuffles, data splits.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// n normal draws from rng. Rejects negative stddev.
std::vector<double> draw_normal(RandomSource& rng, std::size_t n, double mean,
                                double stddev);

/// Fisher-Yates permutation of {0, ..., n-1}.
std::vector<std::size_t> random_permutation(RandomSource& rng, std::size_t n);

}  // namespace marginlab
