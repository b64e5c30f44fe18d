#pragma once

// Numerically stable scalar primitives shared by every module, the
// deterministic reduction used for all pixel sums, and the seeded random
// stream.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace eccd {

/// log(1 + e^x) without overflow for large x or loss of precision for very
/// negative x.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log r(x) and log(1 - r(x)); never formed from a rounded sigmoid output.
inline double log_sigmoid(double x) { return -softplus(-x); }
inline double log1m_sigmoid(double x) { return -softplus(x); }

/// Max-shifted log(sum(exp(v))). Throws std::invalid_argument on empty input.
double logsumexp(std::span<const double> v);

/// Fixed-tree pairwise summation. The tree depends only on v.size(), so the
/// result is reproducible regardless of how v was filled. Empty input sums to 0.
double pairwise_sum(std::span<const double> v);

/// Number of worker threads allowed for intra-run parallel loops. Reads the
/// ECCD_THREADS environment variable once; defaults to 1.
unsigned max_threads();

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are processed
/// on up to max_threads() threads; callers must only write to disjoint outputs.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

/// Counter-based generator: output k is SplitMix64's finaliser applied to
/// seed + (k + 1) * golden-gamma. Identical seeds give identical sequences on
/// every platform; no std:: distributions are involved.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call, pair not cached).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent sub-stream keyed by `stream_id`; does not advance *this.
  RandomStream split(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace eccd
