#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include "jitter/error.hpp"

namespace jitter {

/// Fixed stream assignment so every random draw in a run is auditable.
namespace streams {
inline constexpr std::uint64_t kWeightInit = 0;
inline constexpr std::uint64_t kBatchShuffle = 1;
inline constexpr std::uint64_t kJitterPoints = 2;
inline constexpr std::uint64_t kSyntheticData = 3;
inline constexpr std::uint64_t kSubset = 4;
/// Monte Carlo shards use kMonteCarloBase + shard index.
inline constexpr std::uint64_t kMonteCarloBase = 16;
} // namespace streams

/// Seeded pseudo-random stream.
///
/// The engine is std::mt19937_64 keyed through std::seed_seq with the four
/// 32-bit halves of (seed, stream_id); both algorithms are fully specified by
/// the standard, so sequences are identical on every conforming platform.
/// Uniform doubles take the top 53 bits of one engine output. Normal variates
/// use the Marsaglia polar method, caching the second variate of each pair.
/// Library distributions (std::normal_distribution etc.) are avoided because
/// their algorithms are implementation-defined.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound), bound ≥ 1. Rejection removes modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  double standard_normal() {
    if (spare_) {
      const double z = *spare_;
      spare_.reset();
      return z;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    return u * factor;
  }

  double normal(double mean, double stddev) { return mean + stddev * standard_normal(); }

private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct UniformDist {
  double lo;
  double hi;
};

/// Gaussian restricted to [lo, hi] by rejection.
struct TruncGaussianDist {
  double mu;
  double sigma;
  double lo;
  double hi;
};

struct NormalDist {
  double mu;
  double sigma;
};

/// Distribution of the per-mini-batch Jitter point. Every draw is multiplied
/// by `correction` after sampling.
struct JitterSpec {
  std::variant<UniformDist, TruncGaussianDist, NormalDist> kind;
  double correction = 1.0;

  void validate() const {
    if (!(correction > 0.0) || !std::isfinite(correction))
      throw InvalidArgument("JitterSpec: correction must be > 0");
    std::visit(
        [](const auto &d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, UniformDist>) {
            if (!(d.lo < d.hi))
              throw InvalidArgument("JitterSpec: uniform requires lo < hi");
          } else if constexpr (std::is_same_v<T, TruncGaussianDist>) {
            if (!(d.sigma > 0.0))
              throw InvalidArgument("JitterSpec: truncated gaussian requires sigma > 0");
            if (!(d.lo < d.hi))
              throw InvalidArgument("JitterSpec: truncated gaussian requires lo < hi");
          } else {
            if (!(d.sigma > 0.0))
              throw InvalidArgument("JitterSpec: normal requires sigma > 0");
          }
        },
        kind);
  }
};

inline constexpr int kMaxRejections = 10000;

/// One Jitter point.
inline double sample(const JitterSpec &spec, RngStream &rng) {
  const double raw = std::visit(
      [&rng](const auto &d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformDist>) {
          return rng.uniform(d.lo, d.hi);
        } else if constexpr (std::is_same_v<T, TruncGaussianDist>) {
          for (int i = 0; i < kMaxRejections; ++i) {
            const double x = rng.normal(d.mu, d.sigma);
            if (x >= d.lo && x <= d.hi)
              return x;
          }
          throw DegenerateTruncation("truncated gaussian: no draw landed in [" +
                                     std::to_string(d.lo) + ", " + std::to_string(d.hi) +
                                     "] after " + std::to_string(kMaxRejections) +
                                     " attempts");
        } else {
          return rng.normal(d.mu, d.sigma);
        }
      },
      spec.kind);
  return raw * spec.correction;
}

inline constexpr std::array<std::string_view, 6> kPresetNames = {
    "jitter_1", "jitter_2", "jitter_3", "jitter_4", "jitter_5", "jitter_s"};

inline bool is_preset(std::string_view name) {
  for (auto p : kPresetNames)
    if (p == name)
      return true;
  return false;
}

/// The six published Jitter configurations.
inline JitterSpec jitter_preset(std::string_view name) {
  if (name == "jitter_1")
    return {UniformDist{0.00, 0.04}, 1.0};
  if (name == "jitter_2")
    return {UniformDist{0.01, 0.03}, 1.0};
  if (name == "jitter_3")
    return {TruncGaussianDist{0.02, 0.01, 0.00, 0.04}, 1.0};
  if (name == "jitter_4")
    return {TruncGaussianDist{0.02, 0.005, 0.01, 0.03}, 1.0};
  if (name == "jitter_5")
    return {NormalDist{0.0, 1.0}, 0.1};
  if (name == "jitter_s")
    return {NormalDist{0.0, 1.0}, 1.0};
  throw InvalidArgument("unknown jitter preset '" + std::string(name) + "'");
}

/// Monte Carlo estimate of E[max(α, 0)], the effective flooding level.
inline double effective_flooding_mc(const JitterSpec &spec, std::size_t n, RngStream &rng) {
  if (n == 0)
    throw InvalidArgument("effective_flooding_mc: n must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += std::max(sample(spec, rng), 0.0);
  return sum / static_cast<double>(n);
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

/// Empirical mean and (n−1)-normalized standard deviation, Welford update.
inline Moments moments_mc(const JitterSpec &spec, std::size_t n, RngStream &rng) {
  if (n == 0)
    throw InvalidArgument("moments_mc: n must be >= 1");
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample(spec, rng);
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  return {mean, n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0};
}

} // namespace jitter
