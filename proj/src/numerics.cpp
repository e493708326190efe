#include "marginlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "marginlab/parallel.hpp"

namespace marginlab {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void require_finite(double value, std::string_view what) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": non-finite element");
    }
  }
}

double softplus(double x) {
  require_finite(x, "softplus");
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("log_sum_exp: empty vector");
  }
  const double m = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::vector<double> stable_softmax(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("stable_softmax: empty vector");
  }
  const double m = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - m);
    acc += out[i];
  }
  for (double& v : out) v /= acc;
  return out;
}

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RandomSource::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double RandomSource::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::next_index(std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("next_index: bound must be positive");
  }
  // reject the tail so every residue is equally likely
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return draw % bound;
}

double RandomSource::next_normal(double mean, double stddev) {
  if (stddev < 0.0) {
    throw std::invalid_argument("next_normal: negative stddev");
  }
  // u1 in (0, 1] keeps the log finite
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return mean + stddev * r * std::cos(kTwoPi * u2);
}

std::uint64_t RandomSource::derive_seed(std::uint64_t seed,
                                        std::uint64_t stream) {
  return mix64(seed + (stream + 1) * kGolden);
}

std::vector<double> draw_normal(RandomSource& rng, std::size_t n, double mean,
                                double stddev) {
  if (stddev < 0.0) {
    throw std::invalid_argument("draw_normal: negative stddev");
  }
  std::vector<double> out(n);
  for (double& v : out) v = rng.next_normal(mean, stddev);
  return out;
}

std::vector<std::size_t> random_permutation(RandomSource& rng, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_index(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace marginlab
