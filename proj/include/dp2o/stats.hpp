#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dp2o/error.hpp"

namespace dp2o {

/// Best@M / Mean@M / Worst@M of one rollout set.
struct RolloutStats {
  std::size_t m = 0;
  double best = 0.0;
  double mean = 0.0;
  double worst = 0.0;
};

inline RolloutStats rollout_stats(std::span<const double> rewards) {
  if (rewards.empty()) fail(Errc::empty_list, "rollout stats of empty list");
  RolloutStats s;
  s.m = rewards.size();
  s.best = rewards[0];
  s.worst = rewards[0];
  double sum = 0.0;
  for (double r : rewards) {
    s.best = std::max(s.best, r);
    s.worst = std::min(s.worst, r);
    sum += r;
  }
  s.mean = sum / static_cast<double>(rewards.size());
  return s;
}

struct MeanStdRow {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population std
};

/// Stability protocol: `scores[input][rep][metric]`, each input carrying
/// exactly `expected_reps` repeated scorings. For every repetition the
/// scores are averaged over inputs; the table reports the mean and
/// population std of those per-repetition averages, one row per metric.
inline std::vector<MeanStdRow> mean_std_report(
    const std::vector<std::vector<std::vector<double>>>& scores,
    const std::vector<std::string>& metric_names,
    std::size_t expected_reps = 10) {
  if (scores.empty()) fail(Errc::empty_list, "report needs >= 1 input");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != expected_reps) {
      fail(Errc::sample_count_mismatch,
           "input " + std::to_string(i) + " has " +
               std::to_string(scores[i].size()) + " samples, expected " +
               std::to_string(expected_reps));
    }
    for (const auto& rep : scores[i]) {
      if (rep.size() != metric_names.size()) {
        fail(Errc::dimension_mismatch,
             "input " + std::to_string(i) + " has a sample with " +
                 std::to_string(rep.size()) + " metrics, expected " +
                 std::to_string(metric_names.size()));
      }
    }
  }

  const double n_inputs = static_cast<double>(scores.size());
  const double n_reps = static_cast<double>(expected_reps);
  std::vector<MeanStdRow> rows;
  rows.reserve(metric_names.size());
  for (std::size_t m = 0; m < metric_names.size(); ++m) {
    std::vector<double> rep_means(expected_reps, 0.0);
    for (std::size_t r = 0; r < expected_reps; ++r) {
      double sum = 0.0;
      for (const auto& input : scores) sum += input[r][m];
      rep_means[r] = sum / n_inputs;
    }
    double mean = 0.0;
    for (double v : rep_means) mean += v;
    mean /= n_reps;
    double var = 0.0;
    for (double v : rep_means) var += (v - mean) * (v - mean);
    var /= n_reps;
    rows.push_back(MeanStdRow{metric_names[m], mean, std::sqrt(var)});
  }
  return rows;
}

/// Fixed-precision cell for stability tables, e.g. 0.405±0.009.
inline std::string format_mean_std(double mean, double stddev,
                                   int decimals = 3) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(decimals);
  out << mean << "±" << stddev;
  return out.str();
}

}  // namespace dp2o
