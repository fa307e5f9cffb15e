#include "dp2o/stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dp2o/rng.hpp"

namespace {

using namespace dp2o;

TEST(RolloutStats, Basics) {
  const auto single = rollout_stats(std::vector<double>{0.4});
  EXPECT_DOUBLE_EQ(single.best, 0.4);
  EXPECT_DOUBLE_EQ(single.mean, 0.4);
  EXPECT_DOUBLE_EQ(single.worst, 0.4);
  EXPECT_EQ(single.m, 1u);

  const auto pair = rollout_stats(std::vector<double>{0.2, 0.8});
  EXPECT_DOUBLE_EQ(pair.best, 0.8);
  EXPECT_DOUBLE_EQ(pair.mean, 0.5);
  EXPECT_DOUBLE_EQ(pair.worst, 0.2);

  try {
    rollout_stats({});
    FAIL() << "expected EmptyList";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_list);
  }
}

TEST(RolloutStats, MatchesSortOracle) {
  Prng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> rewards(1 + static_cast<std::size_t>(rng.uniform() * 64));
    for (double& r : rewards) r = rng.normal();
    const auto stats = rollout_stats(rewards);

    auto sorted = rewards;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double r : sorted) sum += r;
    EXPECT_DOUBLE_EQ(stats.worst, sorted.front());
    EXPECT_DOUBLE_EQ(stats.best, sorted.back());
    EXPECT_NEAR(stats.mean, sum / static_cast<double>(sorted.size()), 1e-12);
    EXPECT_LE(stats.worst, stats.mean);
    EXPECT_LE(stats.mean, stats.best);
  }
}

TEST(RolloutStats, PrefixMonotonicity) {
  Prng rng(9);
  std::vector<double> rewards(64);
  for (double& r : rewards) r = rng.uniform();
  const std::span<const double> all(rewards);
  double prev_best = -1.0;
  double prev_worst = 2.0;
  for (std::size_t m = 1; m <= 64; m *= 2) {
    const auto stats = rollout_stats(all.subspan(0, m));
    EXPECT_GE(stats.best, prev_best);
    EXPECT_LE(stats.worst, prev_worst);
    prev_best = stats.best;
    prev_worst = stats.worst;
  }
}

TEST(MeanStdReport, ConstantSamplesGiveZeroStd) {
  // 3 inputs x 10 identical repetitions each.
  std::vector<std::vector<std::vector<double>>> scores(
      3, std::vector<std::vector<double>>(10));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 0; r < 10; ++r) {
      scores[i][r] = {0.1 * static_cast<double>(i + 1)};
    }
  }
  const auto rows = mean_std_report(scores, {"metric"});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].mean, 0.2, 1e-15);
  EXPECT_NEAR(rows[0].stddev, 0.0, 1e-15);
}

TEST(MeanStdReport, TwoInputHandTable) {
  // metric 0: inputs mirror each other, every repetition averages to 0.5.
  // metric 1: both inputs score r/10 at repetition r.
  std::vector<std::vector<std::vector<double>>> scores(
      2, std::vector<std::vector<double>>(10));
  for (std::size_t r = 0; r < 10; ++r) {
    const double v = static_cast<double>(r) / 10.0;
    scores[0][r] = {v, v};
    scores[1][r] = {1.0 - v, v};
  }
  const auto rows = mean_std_report(scores, {"mirrored", "ramp"});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[0].mean, 0.5, 1e-15);
  EXPECT_NEAR(rows[0].stddev, 0.0, 1e-15);
  EXPECT_NEAR(rows[1].mean, 0.45, 1e-15);
  EXPECT_NEAR(rows[1].stddev, std::sqrt(0.0825), 1e-12);
}

TEST(MeanStdReport, SampleCountMismatch) {
  std::vector<std::vector<std::vector<double>>> scores(
      1, std::vector<std::vector<double>>(9, std::vector<double>{0.0}));
  try {
    mean_std_report(scores, {"metric"});
    FAIL() << "expected SampleCountMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::sample_count_mismatch);
  }
}

TEST(FormatMeanStd, StabilityTableCellStyle) {
  EXPECT_EQ(format_mean_std(0.405, 0.009), "0.405±0.009");
  EXPECT_EQ(format_mean_std(0.4049, 0.0094), "0.405±0.009");
  EXPECT_EQ(format_mean_std(73.24, 0.81, 2), "73.24±0.81");
}

}  // namespace
