#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dp2o/rng.hpp"
#include "dp2o/score_model.hpp"

namespace dp2o {

// Conditional 2D point generation. Clean data x* lies on the unit circle;
// the conditioning input is a degraded observation x* + Gaussian noise.
// Sample quality is analytically measurable, which gives the pipeline a
// synthetic FR/NR metric pair without any learned scorer.

struct ToyTaskConfig {
  double cond_noise = 0.25;
  std::size_t data_dim = 2;
};

struct Condition {
  std::vector<double> x_star;  // ground truth on the manifold
  std::vector<double> cond;    // degraded observation fed to the model
};

inline std::vector<Condition> make_conditions(std::size_t count,
                                              const ToyTaskConfig& task,
                                              std::uint64_t seed) {
  std::vector<Condition> conditions(count);
  for (std::size_t i = 0; i < count; ++i) {
    Prng rng(derive_seed(seed, /*tag=*/0xc0, i));
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    Condition& c = conditions[i];
    c.x_star = {std::cos(theta), std::sin(theta)};
    c.x_star.resize(task.data_dim, 0.0);
    c.cond = c.x_star;
    for (double& v : c.cond) v += task.cond_noise * rng.normal();
  }
  return conditions;
}

/// FR metric: negated distance to the ground-truth point.
inline double fidelity_score(std::span<const double> sample,
                             std::span<const double> x_star) {
  double sq = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double d = sample[i] - x_star[i];
    sq += d * d;
  }
  return -std::sqrt(sq);
}

/// NR metric: negated distance to the unit circle, no reference needed.
inline double naturalness_score(std::span<const double> sample) {
  double sq = 0.0;
  for (double v : sample) sq += v * v;
  return -std::abs(std::sqrt(sq) - 1.0);
}

/// The synthetic metric pair, declared exactly like an external manifest.
inline MetricSet toy_metric_set() {
  return MetricSet({
      {"fidelity", MetricFamily::FullReference, MetricDirection::HigherBetter},
      {"naturalness", MetricFamily::NoReference, MetricDirection::HigherBetter},
  });
}

/// Scores one group of samples into raw ScoreRecord rows, ready for the
/// regular ingestion -> reward path.
inline void append_toy_scores(std::vector<ScoreRecord>& records,
                              const std::string& group_id,
                              const std::vector<std::string>& candidate_ids,
                              const std::vector<std::vector<double>>& samples,
                              std::span<const double> x_star) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    records.push_back(ScoreRecord{group_id, candidate_ids[i], "fidelity",
                                  fidelity_score(samples[i], x_star)});
    records.push_back(ScoreRecord{group_id, candidate_ids[i], "naturalness",
                                  naturalness_score(samples[i])});
  }
}

}  // namespace dp2o
