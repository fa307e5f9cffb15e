#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dp2o/curation.hpp"
#include "dp2o/dpo.hpp"
#include "dp2o/error.hpp"
#include "dp2o/hpo.hpp"
#include "dp2o/reward.hpp"

namespace dp2o {

/// Shortest round-trip decimal form; identical input bits always produce
/// identical bytes, which underwrites artifact-level determinism.
inline std::string fmt_double(double value) {
  char buffer[32];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

// ---------------------------------------------------------------------------
// rewards.jsonl: one object per candidate, ingestion order, rank 1 = best.

struct GroupRewards {
  std::string group_id;
  std::vector<std::string> candidate_ids;
  RewardVector rewards;
};

inline void write_rewards_jsonl(std::ostream& out,
                                const std::vector<GroupRewards>& groups) {
  for (const auto& group : groups) {
    const Ranking ranking = rank_candidates(group.rewards);
    std::vector<std::size_t> rank_of(ranking.size());
    for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
      rank_of[ranking[pos]] = pos + 1;
    }
    for (std::size_t c = 0; c < group.candidate_ids.size(); ++c) {
      nlohmann::ordered_json obj;
      obj["group_id"] = group.group_id;
      obj["candidate_id"] = group.candidate_ids[c];
      obj["reward"] = group.rewards.rewards[c];
      obj["rank"] = rank_of[c];
      out << obj.dump() << '\n';
    }
  }
}

inline std::vector<GroupRewards> read_rewards_jsonl(std::istream& in) {
  std::vector<GroupRewards> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_row,
           "rewards line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.contains("group_id") || !obj.contains("candidate_id") ||
        !obj.contains("reward")) {
      fail(Errc::malformed_row,
           "rewards line " + std::to_string(line_no) +
               ": object needs group_id, candidate_id, reward");
    }
    const auto group_id = obj.at("group_id").get<std::string>();
    if (groups.empty() || groups.back().group_id != group_id) {
      bool seen_before = false;
      for (const auto& g : groups) seen_before |= g.group_id == group_id;
      if (seen_before) {
        fail(Errc::malformed_row, "rewards line " + std::to_string(line_no) +
                                      ": group '" + group_id +
                                      "' is not contiguous");
      }
      groups.push_back(GroupRewards{group_id, {}, RewardVector{group_id, {}}});
    }
    groups.back().candidate_ids.push_back(
        obj.at("candidate_id").get<std::string>());
    groups.back().rewards.rewards.push_back(obj.at("reward").get<double>());
  }
  return groups;
}

// ---------------------------------------------------------------------------
// pairs.jsonl / weighted_pairs.jsonl

inline void write_pairs_jsonl(std::ostream& out, const PairDataset& dataset) {
  for (const auto& group : dataset.groups) {
    for (const auto& pair : group.pairs) {
      nlohmann::ordered_json obj;
      obj["group_id"] = pair.group_id;
      obj["winner_id"] = pair.winner_id;
      obj["loser_id"] = pair.loser_id;
      obj["reward_gap"] = pair.reward_gap;
      out << obj.dump() << '\n';
    }
  }
}

inline void write_weighted_pairs_jsonl(std::ostream& out,
                                       const WeightedPairDataset& dataset) {
  for (const auto& group : dataset.groups) {
    for (const auto& wp : group.pairs) {
      nlohmann::ordered_json obj;
      obj["group_id"] = wp.pair.group_id;
      obj["winner_id"] = wp.pair.winner_id;
      obj["loser_id"] = wp.pair.loser_id;
      obj["reward_gap"] = wp.pair.reward_gap;
      obj["w_intra"] = wp.w_intra;
      obj["w_inter"] = wp.w_inter;
      obj["w_total"] = wp.w_total;
      out << obj.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// trainlog.csv: iteration, loss, and the periodic held-out reward stats.
// Iteration 0 rows carry only the pre-training baseline stats.

inline void write_trainlog_csv(std::ostream& out, const TrainRun& run) {
  out << "iteration,loss,best,mean,worst\n";
  std::size_t eval_cursor = 0;
  const auto eval_cells = [&](int iteration) -> std::string {
    if (eval_cursor < run.reward_stats_log.size() &&
        run.reward_stats_log[eval_cursor].iteration == iteration) {
      const RolloutStats& s = run.reward_stats_log[eval_cursor].stats;
      ++eval_cursor;
      return fmt_double(s.best) + ',' + fmt_double(s.mean) + ',' +
             fmt_double(s.worst);
    }
    return ",,";
  };
  if (!run.reward_stats_log.empty() &&
      run.reward_stats_log.front().iteration == 0) {
    out << "0,," << eval_cells(0) << '\n';
  }
  for (std::size_t i = 0; i < run.loss_log.size(); ++i) {
    const int iteration = static_cast<int>(i) + 1;
    out << iteration << ',' << fmt_double(run.loss_log[i]) << ','
        << eval_cells(iteration) << '\n';
  }
}

}  // namespace dp2o
