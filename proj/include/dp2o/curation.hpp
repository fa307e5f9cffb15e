#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dp2o/error.hpp"
#include "dp2o/reward.hpp"
#include "dp2o/score_model.hpp"

namespace dp2o {

struct CurationConfig {
  std::size_t n = 1;          // candidates taken into each extreme set
  std::size_t m = 0;          // expected group size; 0 = any
  bool strict_m = false;      // enforce |group| == m exactly
};

struct PreferencePair {
  std::string group_id;
  std::string winner_id;
  std::string loser_id;
  std::size_t winner_index = 0;  // ingestion-order index within the group
  std::size_t loser_index = 0;
  double reward_gap = 0.0;       // reward(winner) - reward(loser), >= 0
};

/// All pairs of one group plus the reward context the weighting stage needs.
struct GroupPairs {
  std::string group_id;
  std::vector<std::string> candidate_ids;
  RewardVector rewards;
  std::vector<PreferencePair> pairs;
};

struct PairDataset {
  std::vector<GroupPairs> groups;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.pairs.size();
    return n;
  }
};

/// Splits a ranking into the top-N and bottom-N candidate index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
select_extremes(const Ranking& ranking, std::size_t n) {
  if (n == 0) fail(Errc::bad_config, "selection size N must be positive");
  if (2 * n > ranking.size()) {
    fail(Errc::ratio_too_large,
         "2N = " + std::to_string(2 * n) + " exceeds group size M = " +
             std::to_string(ranking.size()));
  }
  std::vector<std::size_t> top(ranking.begin(), ranking.begin() + n);
  std::vector<std::size_t> bottom(ranking.end() - n, ranking.end());
  return {std::move(top), std::move(bottom)};
}

/// Full Cartesian product top x bottom, top index major. Exactly N^2 pairs
/// when both lists have length N.
inline std::vector<PreferencePair> build_pairs(
    const std::vector<std::size_t>& top, const std::vector<std::size_t>& bottom,
    const RewardVector& rewards, const std::vector<std::string>& candidate_ids) {
  for (std::size_t w : top) {
    for (std::size_t l : bottom) {
      if (w == l) {
        fail(Errc::bad_config,
             "top and bottom sets overlap at candidate index " +
                 std::to_string(w));
      }
    }
  }
  std::vector<PreferencePair> pairs;
  pairs.reserve(top.size() * bottom.size());
  for (std::size_t w : top) {
    for (std::size_t l : bottom) {
      PreferencePair pair;
      pair.group_id = rewards.group_id;
      pair.winner_index = w;
      pair.loser_index = l;
      pair.winner_id = candidate_ids[w];
      pair.loser_id = candidate_ids[l];
      pair.reward_gap = rewards.rewards[w] - rewards.rewards[l];
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

/// Curates one already-scored group.
inline GroupPairs curate_group(std::vector<std::string> candidate_ids,
                               RewardVector rewards,
                               const CurationConfig& config) {
  if (config.strict_m && rewards.size() != config.m) {
    fail(Errc::group_size_mismatch,
         "group '" + rewards.group_id + "' has M = " +
             std::to_string(rewards.size()) + ", config requires M = " +
             std::to_string(config.m));
  }
  const Ranking ranking = rank_candidates(rewards);
  auto [top, bottom] = select_extremes(ranking, config.n);
  GroupPairs out;
  out.group_id = rewards.group_id;
  out.pairs = build_pairs(top, bottom, rewards, candidate_ids);
  out.candidate_ids = std::move(candidate_ids);
  out.rewards = std::move(rewards);
  return out;
}

/// Reward computation plus pair construction over a whole corpus; group
/// order is preserved.
inline PairDataset curate_dataset(const std::vector<CandidateGroup>& groups,
                                  const MetricSet& metrics,
                                  const CurationConfig& config) {
  PairDataset dataset;
  dataset.groups.reserve(groups.size());
  for (const auto& group : groups) {
    RewardVector rewards = compute_group_rewards(group, metrics);
    dataset.groups.push_back(
        curate_group(group.candidate_ids, std::move(rewards), config));
  }
  return dataset;
}

}  // namespace dp2o
