#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "jitter/analysis.hpp"
#include "jitter/report.hpp"

namespace jitter {
namespace {

// Composite Simpson on [lo, hi] with n (even) panels.
template <typename F>
double simpson(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i)
    s += f(lo + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

double normal_pdf(double x, double sigma) {
  return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2 * std::numbers::pi));
}

TEST(ClosedForm, NormalPositivePartMatchesQuadrature) {
  for (auto [name, sigma] : {std::pair{"jitter_s", 1.0}, std::pair{"jitter_5", 0.1}}) {
    const double integral =
        simpson([sigma](double x) { return x * normal_pdf(x, sigma); }, 0.0, 12 * sigma, 20000);
    EXPECT_NEAR(*effective_flooding_closed_form(jitter_preset(name)), integral, 1e-12) << name;
  }
}

TEST(ClosedForm, PositiveSupportIsTheMean) {
  for (auto name : {"jitter_1", "jitter_2", "jitter_3", "jitter_4"})
    EXPECT_NEAR(*effective_flooding_closed_form(jitter_preset(name)), 0.02, 1e-17) << name;
  EXPECT_FALSE(effective_flooding_closed_form(JitterSpec{UniformDist{-1, 1}}).has_value());
  EXPECT_FALSE(effective_flooding_closed_form(JitterSpec{NormalDist{0.5, 1}}).has_value());
}

TEST(VerifyTheorem1, StandardNormal) {
  RngStream rng(0, streams::kMonteCarloBase);
  const auto r = verify_theorem1(jitter_preset("jitter_s"), 1000000, 2e-3, rng);
  EXPECT_NEAR(r.closed_form, 0.398942280401, 1e-12);
  EXPECT_TRUE(r.pass);
}

TEST(VerifyTheorem1, UniformAndCorrectedNormal) {
  RngStream rng(0, streams::kMonteCarloBase);
  EXPECT_TRUE(verify_theorem1(jitter_preset("jitter_2"), 100000, 1e-4, rng).pass);
  const auto r5 = verify_theorem1(jitter_preset("jitter_5"), 1000000, 2e-4, rng);
  EXPECT_NEAR(r5.closed_form, 0.0398942280401, 1e-13);
  EXPECT_TRUE(r5.pass);
  EXPECT_THROW(verify_theorem1(jitter_preset("jitter_5"), 9999, 1e-3, rng), InvalidArgument);
}

TEST(VerifyTheorem1, ShardedEstimateIsDeterministicAndAccurate) {
  const auto spec = jitter_preset("jitter_s");
  const double a = effective_flooding_sharded(spec, 400000, 3, 4);
  EXPECT_EQ(a, effective_flooding_sharded(spec, 400000, 3, 4));
  EXPECT_NEAR(a, 1 / std::sqrt(2 * std::numbers::pi), 4 * half_normal_part_std(1.0) / 632.0);
}

TEST(VerifyTheorem1, ErrorShrinksWithMoreSamples) {
  const auto spec = jitter_preset("jitter_s");
  const double truth = 1 / std::sqrt(2 * std::numbers::pi);
  const std::size_t n = 250000;
  const double se = half_normal_part_std(1.0) / std::sqrt(double(n));
  const double big = effective_flooding_sharded(spec, 4 * n, 1, 4);
  EXPECT_LT(std::abs(big - truth), 3 * se);
}

TEST(Jensen, TwoBatchExample) {
  const std::vector<std::pair<double, double>> b{{0.01, 0.02}, {0.03, 0.02}};
  const auto r = jensen_check(b);
  EXPECT_NEAR(r.lhs, 0.02, 1e-17);
  EXPECT_NEAR(r.rhs, 0.03, 1e-17);
  EXPECT_TRUE(r.pass);
}

TEST(Jensen, SingleBatchAndEqualBatchesAreTight) {
  const std::vector<std::pair<double, double>> one{{0.4, 0.9}};
  const auto r1 = jensen_check(one);
  EXPECT_EQ(r1.lhs, r1.rhs);
  const std::vector<std::pair<double, double>> same(9, {0.011, 0.02});
  const auto r2 = jensen_check(same);
  EXPECT_NEAR(r2.lhs, r2.rhs, 1e-16);
  EXPECT_THROW(jensen_check(std::span<const std::pair<double, double>>{}), InvalidArgument);
}

TEST(Jensen, RandomBatchListsRespectBound) {
  RngStream rng(8, 0);
  for (int t = 0; t < 20000; ++t) {
    std::vector<std::pair<double, double>> b(1 + rng.below(50));
    for (auto &[r, a] : b) {
      r = rng.uniform(0, 0.1);
      a = rng.normal(0.02, 0.05);
    }
    ASSERT_TRUE(jensen_check(b).pass);
  }
}

TEST(Jensen, EpochOverloadTreatsOriginalAsZeroPoint) {
  EpochMetrics m;
  m.batches = {{0.3, std::nullopt, 1.0}, {0.5, std::nullopt, 1.0}};
  const auto r = jensen_check(m);
  EXPECT_DOUBLE_EQ(r.lhs, 0.4);
  EXPECT_DOUBLE_EQ(r.rhs, 0.4);
}

TEST(Mse, WrappedEstimatorWinsOnConditionA) {
  RngStream rng(0, streams::kMonteCarloBase);
  const auto r = mse_experiment(0.5, 0.2, 0.3, 1000000, rng);
  EXPECT_GT(r.n_condition_a, 0u);
  EXPECT_LT(r.mse_wrapped_a, r.mse_raw_a);
  EXPECT_EQ(r.max_abs_diff_b, 0.0);
  EXPECT_LE(r.n_condition_a + r.n_condition_b, r.n_total);
}

TEST(Mse, ZeroPointPutsEverythingInConditionB) {
  RngStream rng(1, streams::kMonteCarloBase);
  const auto r = mse_experiment(0.5, 0.2, 0.0, 100000, rng);
  EXPECT_EQ(r.n_condition_b, r.n_total);
  EXPECT_EQ(r.n_condition_a, 0u);
  EXPECT_EQ(r.max_abs_diff_b, 0.0);
}

TEST(Mse, SingleRealizationArithmetic) {
  // L̂ = 0.1, α = 0.3, L = 0.5: wrapped = 2·0.3 − 0.1 = 0.5, error 0 < |0.1 − 0.5|.
  const double wrapped = jitter_transform(0.1, 0.3);
  EXPECT_NEAR(wrapped, 0.5, 1e-15);
  EXPECT_LT(std::abs(wrapped - 0.5), std::abs(0.1 - 0.5));
}

TEST(Mse, PointAboveTrueRiskIsFlagged) {
  RngStream rng(2, 0);
  const auto r = mse_experiment(0.2, 0.1, 0.3, 100000, rng);
  EXPECT_TRUE(r.condition_a_empty);
  EXPECT_EQ(r.n_condition_a, 0u);
}

TEST(Mse, InequalityHoldsAcrossParameterGrid) {
  RngStream rng(3, streams::kMonteCarloBase);
  for (double L : {0.05, 0.5, 2.0})
    for (double sd_frac : {0.3, 0.5, 1.0})
      for (double a_frac : {0.3, 0.5, 0.9}) {
        const auto r = mse_experiment(L, sd_frac * L, a_frac * L, 100000, rng);
        ASSERT_GT(r.n_condition_a, 0u);
        EXPECT_LT(r.mse_wrapped_a, r.mse_raw_a) << L << " " << sd_frac << " " << a_frac;
        EXPECT_EQ(r.max_abs_diff_b, 0.0);
      }
}

CurveSamples parabola(std::size_t points = 2001) {
  return sample_curve([](double x) { return x * x; }, -1.0, 1.0, points);
}

TEST(FlipCurve, ParabolaSplitsIntoTwoMinima) {
  const auto flipped = flip_curve(parabola(), 0.25);
  const auto minima = local_minima(flipped);
  ASSERT_EQ(minima.size(), 2u);
  const double step = 0.001;
  EXPECT_NEAR(flipped.xs[minima[0]], -0.5, step);
  EXPECT_NEAR(flipped.xs[minima[1]], 0.5, step);
  for (auto i : minima)
    EXPECT_NEAR(flipped.ys[i], 0.25, 1e-12);
  EXPECT_EQ(count_local_minima(parabola()), 1u);
}

TEST(FlipCurve, ZeroLevelIsIdentityOnNonNegativeCurves) {
  const auto c = parabola(101);
  EXPECT_EQ(flip_curve(c, 0.0).ys, c.ys);
}

TEST(FlipCurve, LevelAboveMaxReflectsEverything) {
  const auto c = parabola(101);
  const auto f = flip_curve(c, 3.0);
  for (std::size_t i = 0; i < c.ys.size(); ++i)
    EXPECT_EQ(f.ys[i], 6.0 - c.ys[i]);
}

TEST(FlipCurve, NeverLowersASample) {
  RngStream rng(4, 0);
  for (int t = 0; t < 200; ++t) {
    CurveSamples c;
    for (int i = 0; i < 50; ++i) {
      c.xs.push_back(i);
      c.ys.push_back(rng.uniform(0, 1));
    }
    const auto f = flip_curve(c, rng.uniform(-0.5, 1.5));
    for (std::size_t i = 0; i < c.ys.size(); ++i)
      ASSERT_GE(f.ys[i], c.ys[i]);
  }
}

TEST(FlipCurve, RejectsNonMonotoneGrid) {
  CurveSamples c{{0, 2, 1}, {1, 1, 1}};
  EXPECT_THROW(flip_curve(c, 0.1), InvalidArgument);
}

TEST(LocalMinima, ConstantCurveIsOnePlateau) {
  CurveSamples c{{0, 1, 2, 3, 4}, {2, 2, 2, 2, 2}};
  EXPECT_EQ(count_local_minima(c), 1u);
}

TEST(LocalMinima, PlateausMergeWithinTolerance) {
  CurveSamples c{{0, 1, 2, 3, 4, 5, 6}, {3, 1, 1 + 1e-12, 1, 2, 0.5, 4}};
  EXPECT_EQ(count_local_minima(c, 1e-9), 2u);
  EXPECT_EQ(count_local_minima(c, 0.0), 3u);
  CurveSamples tiny{{0, 1}, {1, 2}};
  EXPECT_THROW(count_local_minima(tiny), InvalidArgument);
}

TEST(LocalMinima, FlippedConvexCurvesHaveTwoMinima) {
  RngStream rng(6, 0);
  for (int t = 0; t < 200; ++t) {
    const double c = rng.uniform(-0.6, 0.6);
    const double a = rng.uniform(0.2, 5.0);
    const double d = rng.uniform(-1.0, 1.0);
    const auto curve = sample_curve([&](double x) { return a * (x - c) * (x - c) + d; }, -1.0,
                                    1.0, 1001);
    const double lowest_end = std::min(curve.ys.front(), curve.ys.back());
    // Level strictly between the minimum and the lower endpoint, so the curve
    // crosses it on both sides of the vertex.
    const double level = d + rng.uniform(0.05, 0.95) * (lowest_end - d);
    ASSERT_EQ(count_local_minima(flip_curve(curve, level)), 2u)
        << "a=" << a << " c=" << c << " level=" << level;
  }
}

std::vector<double> piecewise(std::initializer_list<double> knots, int per_segment) {
  std::vector<double> out;
  auto it = knots.begin();
  double prev = *it++;
  for (; it != knots.end(); ++it) {
    for (int i = 0; i < per_segment; ++i)
      out.push_back(prev + (*it - prev) * i / per_segment);
    prev = *it;
  }
  out.push_back(prev);
  return out;
}

TEST(DoubleDescent, DownUpDownIsFlagged) {
  const auto series = piecewise({1.0, 0.4, 0.8, 0.3}, 20);
  const auto r = detect_double_descent(series, 5, 0.05);
  EXPECT_TRUE(r.double_descent);
  ASSERT_EQ(r.phases.size(), 3u);
  EXPECT_EQ(r.phases[0].direction, PhaseDirection::Down);
  EXPECT_EQ(r.phases[1].direction, PhaseDirection::Up);
  EXPECT_EQ(r.phases[2].direction, PhaseDirection::Down);
  ASSERT_EQ(r.turning_points.size(), 2u);
  EXPECT_NEAR(double(r.turning_points[0]), 20.0, 2.0);
  EXPECT_NEAR(double(r.turning_points[1]), 40.0, 2.0);
  EXPECT_TRUE(detect_double_descent(series).double_descent);
}

TEST(DoubleDescent, MonotoneSeriesIsOneDownPhase) {
  std::vector<double> s;
  for (int i = 0; i < 60; ++i)
    s.push_back(std::exp(-0.05 * i));
  const auto r = detect_double_descent(s);
  ASSERT_EQ(r.phases.size(), 1u);
  EXPECT_EQ(r.phases[0].direction, PhaseDirection::Down);
  EXPECT_FALSE(r.double_descent);
}

TEST(DoubleDescent, ConstantSeriesHasNoPhases) {
  const std::vector<double> s(40, 0.7);
  const auto r = detect_double_descent(s);
  EXPECT_TRUE(r.phases.empty());
  EXPECT_FALSE(r.double_descent);
}

TEST(DoubleDescent, NoiseBelowThresholdIsIgnored) {
  auto s = piecewise({1.0, 0.2}, 60);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] += (i % 2 ? 0.004 : -0.004);
  EXPECT_EQ(detect_double_descent(s, 5, 0.05).phases.size(), 1u);
}

TEST(DoubleDescent, ShortSeriesThrows) {
  const std::vector<double> s(14, 1.0);
  EXPECT_THROW(detect_double_descent(s, 5, 0.1), InvalidArgument);
}

TEST(MovingAverage, CenteredWithShrinkingEdges) {
  const std::vector<double> s{1, 2, 3, 4, 10};
  EXPECT_EQ(moving_average(s, 3), (std::vector<double>{1, 2, 3, 17.0 / 3, 10}));
}

RunRecord record(const std::string &wrapper, std::uint64_t seed, double acc, double loss) {
  RunRecord r;
  r.run_id = wrapper + std::to_string(seed);
  r.wrapper = wrapper;
  r.seed = seed;
  r.comparison_key = "k";
  EpochMetrics m;
  m.test_accuracy = acc;
  m.raw_train_loss = loss;
  r.epochs.push_back(m);
  return r;
}

TEST(CompareRuns, SingleRecordBestEqualsMean) {
  const std::vector<RunRecord> rs{record("original", 0, 0.8, 0.1)};
  const auto rows = compare_runs(rs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].best_acc, rows[0].mean_acc);
}

TEST(CompareRuns, BestAndMeanAcrossSeeds) {
  const std::vector<RunRecord> rs{record("jitter_5", 0, 0.91, 0.02),
                                  record("jitter_5", 1, 0.93, 0.04)};
  const auto rows = compare_runs(rs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].seeds, 2u);
  EXPECT_DOUBLE_EQ(rows[0].best_acc, 0.93);
  EXPECT_DOUBLE_EQ(rows[0].mean_acc, 0.92);
  EXPECT_DOUBLE_EQ(rows[0].final_raw_train_loss, 0.03);
}

TEST(CompareRuns, InconsistentConfigsThrow) {
  auto a = record("original", 0, 0.8, 0.1);
  auto b = record("flooding_0.02", 0, 0.8, 0.1);
  b.comparison_key = "other";
  const std::vector<RunRecord> rs{a, b};
  EXPECT_THROW(compare_runs(rs), InvalidArgument);
}

TEST(CompareRuns, GoldenReport) {
  const std::vector<RunRecord> rs{
      record("original", 0, 0.75, 0.001), record("flooding_0.02", 0, 0.8, 0.02),
      record("original", 1, 0.77, 0.003), record("flooding_0.02", 1, 0.78, 0.018)};
  const std::vector<FailedRun> failed{{"jitter_s", 0, "boom"}, {"original", 2, "boom"}};
  const auto rows = compare_runs(rs, failed);
  EXPECT_EQ(report_csv(rows), "wrapper,seeds,best_acc,mean_acc,final_raw_train_loss\n"
                              "original,2,0.77,0.76,0.002\n"
                              "flooding_0.02,2,0.8,0.79,0.019\n"
                              "jitter_s,0,,,\n");
  EXPECT_EQ(report_text(rows),
            "wrapper        seeds  best_acc  mean_acc  final_raw_train_loss\n"
            "original           2    0.7700    0.7600                 0.002  (1 failed)\n"
            "flooding_0.02      2    0.8000    0.7900                 0.019\n"
            "jitter_s           0         -         -                     -  (1 failed)\n");
}

} // namespace
} // namespace jitter
