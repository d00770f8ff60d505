#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jitter/losses.hpp"
#include "jitter/samplers.hpp"
#include "jitter/trainer.hpp"

namespace jitter {

// ---------------------------------------------------------------------------
// Effective flooding level.

/// Closed-form E[max(α, 0)] where one exists: σ·c/√(2π) for a zero-mean
/// normal (c = correction), the plain mean c·(lo+hi)/2 or c·μ for specs whose
/// support is non-negative and symmetric about the mean. nullopt otherwise.
inline std::optional<double> effective_flooding_closed_form(const JitterSpec &spec) {
  return std::visit(
      [&spec](const auto &d) -> std::optional<double> {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformDist>) {
          if (d.lo >= 0.0)
            return spec.correction * 0.5 * (d.lo + d.hi);
        } else if constexpr (std::is_same_v<T, TruncGaussianDist>) {
          // Symmetric truncation keeps the mean at μ.
          if (d.lo >= 0.0 && std::abs((d.mu - d.lo) - (d.hi - d.mu)) <= 1e-12 * (d.hi - d.lo))
            return spec.correction * d.mu;
        } else {
          if (d.mu == 0.0)
            return spec.correction * d.sigma / std::sqrt(2.0 * std::numbers::pi);
        }
        return std::nullopt;
      },
      spec.kind);
}

/// Standard deviation of max(α, 0) for a zero-mean normal spec, used to size
/// Monte Carlo tolerances: σ_eff·√(1/2 − 1/(2π)).
inline double half_normal_part_std(double sigma_eff) {
  return sigma_eff * std::sqrt(0.5 - 0.5 / std::numbers::pi);
}

struct Theorem1Result {
  double estimate = 0.0;
  double closed_form = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline Theorem1Result verify_theorem1(const JitterSpec &spec, std::size_t n, double tol,
                                      RngStream &rng) {
  if (n < 10000)
    throw InvalidArgument("verify_theorem1: n must be >= 10^4");
  const auto closed = effective_flooding_closed_form(spec);
  if (!closed)
    throw InvalidArgument("verify_theorem1: no closed form for this spec");
  Theorem1Result r;
  r.estimate = effective_flooding_mc(spec, n, rng);
  r.closed_form = *closed;
  r.tolerance = tol;
  r.pass = std::abs(r.estimate - r.closed_form) < tol;
  return r;
}

/// effective_flooding_mc split over `shards` workers, shard i drawing from
/// stream kMonteCarloBase + i of `seed`. Shard means are combined weighted by
/// their draw counts, so the result depends on (seed, n, shards) only.
inline double effective_flooding_sharded(const JitterSpec &spec, std::size_t n,
                                         std::uint64_t seed, std::size_t shards) {
  if (n == 0 || shards == 0)
    throw InvalidArgument("effective_flooding_sharded: n and shards must be >= 1");
  shards = std::min(shards, n);
  std::vector<double> means(shards);
  std::vector<std::size_t> counts(shards);
  std::vector<std::thread> workers;
  for (std::size_t s = 0; s < shards; ++s) {
    counts[s] = n / shards + (s < n % shards ? 1 : 0);
    workers.emplace_back([&, s] {
      RngStream rng(seed, streams::kMonteCarloBase + s);
      means[s] = effective_flooding_mc(spec, counts[s], rng);
    });
  }
  for (auto &w : workers)
    w.join();
  double total = 0.0;
  for (std::size_t s = 0; s < shards; ++s)
    total += means[s] * static_cast<double>(counts[s]);
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Mini-batch upper bound.

struct JensenResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

/// rhs = mean of |R_m − α_m| + α_m; lhs = |R̄ − ᾱ| + ᾱ over the plain means.
/// Convexity of |·| gives lhs ≤ rhs; `tol` absorbs rounding.
inline JensenResult jensen_check(std::span<const std::pair<double, double>> per_batch,
                                 double tol = 1e-12) {
  if (per_batch.empty())
    throw InvalidArgument("jensen_check: empty batch list");
  double r_sum = 0.0, a_sum = 0.0, wrapped_sum = 0.0;
  for (const auto &[r, a] : per_batch) {
    r_sum += r;
    a_sum += a;
    wrapped_sum += std::abs(r - a) + a;
  }
  const double m = static_cast<double>(per_batch.size());
  const double r_bar = r_sum / m, a_bar = a_sum / m;
  JensenResult out;
  out.lhs = std::abs(r_bar - a_bar) + a_bar;
  out.rhs = wrapped_sum / m;
  out.pass = out.lhs <= out.rhs + tol;
  return out;
}

/// jensen_check over one training epoch. Original-wrapper batches carry no
/// Jitter point and enter with α = 0, where both sides reduce to the mean risk.
inline JensenResult jensen_check(const EpochMetrics &epoch, double tol = 1e-12) {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(epoch.batches.size());
  for (const auto &b : epoch.batches)
    pairs.emplace_back(b.risk, b.alpha.value_or(0.0));
  return jensen_check(pairs, tol);
}

// ---------------------------------------------------------------------------
// Risk-estimator MSE.

struct MseReport {
  std::size_t n_total = 0;
  std::size_t n_condition_a = 0;
  std::size_t n_condition_b = 0;
  double mse_raw_a = 0.0;
  double mse_wrapped_a = 0.0;
  double max_abs_diff_b = 0.0;
  /// Set when α ≥ L, which leaves condition (a) empty by construction.
  bool condition_a_empty = false;
};

/// Draws n estimates L̂ ~ N(L, std²) clipped at 0 and compares L̂ with its
/// wrapped form |L̂ − α| + α as estimators of L. Condition (a): L̂ < α < L.
/// Condition (b): α ≤ L̂.
inline MseReport mse_experiment(double true_risk, double estimator_std, double alpha,
                                std::size_t n, RngStream &rng) {
  if (!(true_risk > 0.0))
    throw InvalidArgument("mse_experiment: true risk must be > 0");
  if (!(estimator_std > 0.0))
    throw InvalidArgument("mse_experiment: estimator_std must be > 0");
  if (n == 0)
    throw InvalidArgument("mse_experiment: n must be >= 1");
  MseReport rep;
  rep.n_total = n;
  rep.condition_a_empty = alpha >= true_risk;
  double sq_raw = 0.0, sq_wrapped = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double est = std::max(rng.normal(true_risk, estimator_std), 0.0);
    const double wrapped = jitter_transform(est, alpha);
    const double err_raw = est - true_risk;
    const double err_wrapped = wrapped - true_risk;
    if (est < alpha && alpha < true_risk) {
      ++rep.n_condition_a;
      sq_raw += err_raw * err_raw;
      sq_wrapped += err_wrapped * err_wrapped;
    } else if (alpha <= est) {
      ++rep.n_condition_b;
      rep.max_abs_diff_b =
          std::max(rep.max_abs_diff_b, std::abs(std::abs(err_wrapped) - std::abs(err_raw)));
    }
  }
  if (rep.n_condition_a > 0) {
    rep.mse_raw_a = sq_raw / static_cast<double>(rep.n_condition_a);
    rep.mse_wrapped_a = sq_wrapped / static_cast<double>(rep.n_condition_a);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// 1-D loss curves.

struct CurveSamples {
  std::vector<double> xs;
  std::vector<double> ys;

  void validate() const {
    if (xs.size() != ys.size())
      throw ShapeError("CurveSamples: xs and ys differ in length");
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (!(xs[i] > xs[i - 1]))
        throw InvalidArgument("CurveSamples: xs must be strictly increasing");
  }
};

/// Uniform grid of `points` samples of f on [lo, hi], endpoints included.
template <typename F>
CurveSamples sample_curve(F &&f, double lo, double hi, std::size_t points) {
  if (points < 2 || !(lo < hi))
    throw InvalidArgument("sample_curve: need >= 2 points on a non-empty range");
  CurveSamples c;
  c.xs.resize(points);
  c.ys.resize(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    c.xs[i] = i + 1 == points ? hi : lo + step * static_cast<double>(i);
    c.ys[i] = f(c.xs[i]);
  }
  return c;
}

/// Pointwise |y − level| + level.
inline CurveSamples flip_curve(const CurveSamples &curve, double level) {
  curve.validate();
  CurveSamples out = curve;
  for (auto &y : out.ys)
    y = flooding_transform(y, level);
  return out;
}

/// Indices (first sample of each plateau) of local minima. Consecutive samples
/// within `tol` of each other form one plateau; a plateau is a minimum when no
/// neighbouring plateau is lower and it contains an interior sample.
inline std::vector<std::size_t> local_minima(const CurveSamples &curve, double tol = 0.0) {
  curve.validate();
  const auto &ys = curve.ys;
  if (ys.size() < 3)
    throw InvalidArgument("count_local_minima: need at least 3 samples");
  struct Run {
    std::size_t first, last;
    double value;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!runs.empty() && std::abs(ys[i] - ys[runs.back().last]) <= tol)
      runs.back().last = i;
    else
      runs.push_back({i, i, ys[i]});
  }
  std::vector<std::size_t> minima;
  const std::size_t n = ys.size();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const bool interior = runs[r].last >= 1 && runs[r].first <= n - 2;
    const bool left_ok = r == 0 || runs[r - 1].value > runs[r].value;
    const bool right_ok = r + 1 == runs.size() || runs[r + 1].value > runs[r].value;
    if (interior && left_ok && right_ok)
      minima.push_back(runs[r].first);
  }
  return minima;
}

inline std::size_t count_local_minima(const CurveSamples &curve, double tol = 0.0) {
  return local_minima(curve, tol).size();
}

// ---------------------------------------------------------------------------
// Double descent.

enum class PhaseDirection { Down, Up };

struct Phase {
  std::size_t start = 0;
  std::size_t end = 0;
  PhaseDirection direction = PhaseDirection::Down;
};

struct DescentPhases {
  std::vector<double> smoothed;
  std::vector<std::size_t> turning_points;
  std::vector<Phase> phases;
  bool double_descent = false;
};

/// Centered moving average; the window shrinks symmetrically at the edges.
inline std::vector<double> moving_average(std::span<const double> xs, std::size_t window) {
  if (window == 0)
    throw InvalidArgument("moving_average: window must be >= 1");
  const std::size_t half = window / 2;
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t reach = std::min({half, i, xs.size() - 1 - i});
    double sum = 0.0;
    for (std::size_t j = i - reach; j <= i + reach; ++j)
      sum += xs[j];
    out[i] = sum / static_cast<double>(2 * reach + 1);
  }
  return out;
}

/// Smooths the series, then splits it into alternating down/up phases whose
/// amplitude is at least `min_drop` (a zig-zag filter). Flags double descent
/// when a down, up, down sequence of phases occurs.
inline DescentPhases detect_double_descent(std::span<const double> series, std::size_t window,
                                           double min_drop) {
  if (window == 0)
    throw InvalidArgument("detect_double_descent: window must be >= 1");
  if (series.size() < 3 * window)
    throw InvalidArgument("detect_double_descent: series shorter than 3 * window");
  if (!(min_drop > 0.0))
    throw InvalidArgument("detect_double_descent: min_drop must be > 0");
  DescentPhases out;
  out.smoothed = moving_average(series, window);
  const auto &s = out.smoothed;

  // Pivot indices: the start, every confirmed extremum, and the final extremum
  // when its move from the previous pivot reaches min_drop.
  std::vector<std::size_t> pivots{0};
  std::size_t extreme = 0;
  int dir = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (dir == 0) {
      if (std::abs(s[i] - s[0]) >= min_drop) {
        dir = s[i] > s[0] ? 1 : -1;
        extreme = i;
      } else if (std::abs(s[i] - s[0]) > std::abs(s[extreme] - s[0])) {
        extreme = i;
      }
      continue;
    }
    if ((dir > 0 && s[i] >= s[extreme]) || (dir < 0 && s[i] <= s[extreme])) {
      extreme = i;
    } else if (std::abs(s[i] - s[extreme]) >= min_drop) {
      pivots.push_back(extreme);
      out.turning_points.push_back(extreme);
      dir = -dir;
      extreme = i;
    }
  }
  if (dir != 0 && std::abs(s[extreme] - s[pivots.back()]) >= min_drop)
    pivots.push_back(extreme);

  for (std::size_t k = 1; k < pivots.size(); ++k)
    out.phases.push_back({pivots[k - 1], pivots[k],
                          s[pivots[k]] < s[pivots[k - 1]] ? PhaseDirection::Down
                                                          : PhaseDirection::Up});
  for (std::size_t k = 2; k < out.phases.size(); ++k)
    if (out.phases[k - 2].direction == PhaseDirection::Down &&
        out.phases[k - 1].direction == PhaseDirection::Up &&
        out.phases[k].direction == PhaseDirection::Down)
      out.double_descent = true;
  return out;
}

/// Default detector: window 5, min_drop 2% of the raw series range.
inline DescentPhases detect_double_descent(std::span<const double> series) {
  if (series.empty())
    throw InvalidArgument("detect_double_descent: empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  const double range = *hi - *lo;
  // A flat series has no phases; an infinite threshold keeps smoothing
  // round-off from inventing any.
  return detect_double_descent(series, 5,
                               range > 0.0 ? 0.02 * range : std::numeric_limits<double>::infinity());
}

} // namespace jitter
