#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "dp2o/error.hpp"
#include "dp2o/score_model.hpp"

namespace dp2o {

/// Per-group min-max normalized scores; every entry lies in [0,1].
struct NormalizedGroup {
  std::string group_id;
  std::vector<std::string> candidate_ids;
  std::vector<double> normalized;  // row-major, M x |metrics|
  std::size_t n_metrics = 0;

  std::size_t size() const { return candidate_ids.size(); }
  double at(std::size_t candidate, std::size_t metric) const {
    return normalized[candidate * n_metrics + metric];
  }
};

struct RewardVector {
  std::string group_id;
  std::vector<double> rewards;  // parallel to candidate ingestion order

  std::size_t size() const { return rewards.size(); }
};

/// Candidate indices, best reward first.
using Ranking = std::vector<std::size_t>;

/// Negates LowerBetter columns so that higher always means better.
/// Idempotent: an already-aligned group passes through unchanged.
inline CandidateGroup align_direction(CandidateGroup group,
                                      const MetricSet& metrics) {
  if (group.direction_aligned) return group;
  if (group.n_metrics != metrics.size()) {
    fail(Errc::dimension_mismatch,
         "group '" + group.group_id + "' has " +
             std::to_string(group.n_metrics) + " metric columns, expected " +
             std::to_string(metrics.size()));
  }
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    if (metrics.at(m).direction != MetricDirection::LowerBetter) continue;
    for (std::size_t c = 0; c < group.size(); ++c) {
      group.score(c, m) = -group.score(c, m);
    }
  }
  group.direction_aligned = true;
  return group;
}

/// Maps each aligned column affinely onto [0,1]. Constant columns map to
/// 0.5 everywhere so that a degenerate metric stays family-weight neutral.
inline NormalizedGroup minmax_normalize(const CandidateGroup& group) {
  if (!group.direction_aligned) {
    fail(Errc::not_direction_aligned,
         "group '" + group.group_id + "' must be direction-aligned first");
  }
  if (group.size() < 2) {
    fail(Errc::singleton_group, "group '" + group.group_id +
                                    "' has " + std::to_string(group.size()) +
                                    " candidate(s); normalization needs M >= 2");
  }
  NormalizedGroup out;
  out.group_id = group.group_id;
  out.candidate_ids = group.candidate_ids;
  out.n_metrics = group.n_metrics;
  out.normalized.resize(group.raw_scores.size());
  for (std::size_t m = 0; m < group.n_metrics; ++m) {
    double lo = group.score(0, m);
    double hi = lo;
    for (std::size_t c = 1; c < group.size(); ++c) {
      lo = std::min(lo, group.score(c, m));
      hi = std::max(hi, group.score(c, m));
    }
    const double span = hi - lo;
    for (std::size_t c = 0; c < group.size(); ++c) {
      out.normalized[c * group.n_metrics + m] =
          span == 0.0 ? 0.5 : (group.score(c, m) - lo) / span;
    }
  }
  return out;
}

/// Hybrid perceptual reward: equal-weight average of the FR-family mean and
/// the NR-family mean of normalized scores.
inline RewardVector hybrid_reward(const NormalizedGroup& group,
                                  const MetricSet& metrics) {
  if (group.n_metrics != metrics.size()) {
    fail(Errc::dimension_mismatch,
         "group '" + group.group_id + "' has " +
             std::to_string(group.n_metrics) + " metric columns, expected " +
             std::to_string(metrics.size()));
  }
  const std::size_t n_fr = metrics.family_count(MetricFamily::FullReference);
  const std::size_t n_nr = metrics.family_count(MetricFamily::NoReference);
  if (n_fr == 0 || n_nr == 0) {
    fail(Errc::empty_family,
         "hybrid reward needs at least one FR and one NR metric");
  }
  RewardVector out;
  out.group_id = group.group_id;
  out.rewards.resize(group.size());
  for (std::size_t c = 0; c < group.size(); ++c) {
    double fr_sum = 0.0;
    double nr_sum = 0.0;
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      if (metrics.at(m).family == MetricFamily::FullReference) {
        fr_sum += group.at(c, m);
      } else {
        nr_sum += group.at(c, m);
      }
    }
    const double r = 0.5 / static_cast<double>(n_fr) * fr_sum +
                     0.5 / static_cast<double>(n_nr) * nr_sum;
    out.rewards[c] = std::clamp(r, 0.0, 1.0);
  }
  return out;
}

/// Descending by reward; ties break by ingestion order (earlier candidate
/// ranks higher).
inline Ranking rank_candidates(const RewardVector& rewards) {
  Ranking order(rewards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return rewards.rewards[a] > rewards.rewards[b];
                   });
  return order;
}

/// align -> normalize -> hybrid reward, the full per-group reward path.
inline RewardVector compute_group_rewards(const CandidateGroup& group,
                                          const MetricSet& metrics) {
  return hybrid_reward(minmax_normalize(align_direction(group, metrics)),
                       metrics);
}

}  // namespace dp2o
