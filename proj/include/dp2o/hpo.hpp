#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dp2o/curation.hpp"
#include "dp2o/error.hpp"

namespace dp2o {

enum class HpoMode { Base, Intra, Inter, Both };

inline const char* hpo_mode_name(HpoMode mode) {
  switch (mode) {
    case HpoMode::Base: return "base";
    case HpoMode::Intra: return "intra";
    case HpoMode::Inter: return "inter";
    case HpoMode::Both: return "both";
  }
  return "base";
}

inline HpoMode parse_hpo_mode(std::string_view text) {
  if (text == "base") return HpoMode::Base;
  if (text == "intra") return HpoMode::Intra;
  if (text == "inter") return HpoMode::Inter;
  if (text == "both") return HpoMode::Both;
  fail(Errc::bad_config, "unknown hpo mode '" + std::string(text) +
                             "' (expected base|intra|inter|both)");
}

struct WeightedPair {
  PreferencePair pair;
  double w_intra = 1.0;
  double w_inter = 1.0;
  double w_total = 1.0;
};

struct WeightedGroup {
  std::string group_id;
  std::vector<std::string> candidate_ids;
  RewardVector rewards;
  std::vector<WeightedPair> pairs;
  double reward_stddev = 0.0;  // population std of the group's rewards
};

struct WeightedPairDataset {
  HpoMode mode = HpoMode::Both;
  std::vector<WeightedGroup> groups;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.pairs.size();
    return n;
  }
};

/// w_intra(p) = |dR_p| + (1 - mean gap), averaged over the group's pairs;
/// the returned weights have mean exactly 1 up to rounding.
inline std::vector<double> intra_weights(
    const std::vector<PreferencePair>& group_pairs) {
  if (group_pairs.empty()) {
    fail(Errc::empty_group, "intra weights need at least one pair");
  }
  double gap_sum = 0.0;
  for (const auto& p : group_pairs) gap_sum += std::abs(p.reward_gap);
  const double mean_gap = gap_sum / static_cast<double>(group_pairs.size());
  std::vector<double> weights(group_pairs.size());
  for (std::size_t i = 0; i < group_pairs.size(); ++i) {
    weights[i] = std::abs(group_pairs[i].reward_gap) + (1.0 - mean_gap);
  }
  return weights;
}

/// Population standard deviation. For rewards in [0,1] this is at most 0.5.
inline double population_stddev(const std::vector<double>& values) {
  if (values.empty()) fail(Errc::empty_list, "stddev of empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var);
}

/// w_inter(g) = sigma_g + (1 - mean sigma over groups); mean of returned
/// weights is exactly 1 up to rounding.
inline std::vector<double> inter_weights(
    const std::vector<RewardVector>& groups) {
  if (groups.empty()) fail(Errc::empty_corpus, "inter weights need >= 1 group");
  std::vector<double> sigma(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) {
      fail(Errc::singleton_group,
           "group '" + groups[g].group_id + "' needs M >= 2 for inter weights");
    }
    sigma[g] = population_stddev(groups[g].rewards);
  }
  double mean_sigma = 0.0;
  for (double s : sigma) mean_sigma += s;
  mean_sigma /= static_cast<double>(sigma.size());
  std::vector<double> weights(sigma.size());
  for (std::size_t g = 0; g < sigma.size(); ++g) {
    weights[g] = sigma[g] + (1.0 - mean_sigma);
  }
  return weights;
}

/// Attaches hierarchical weights to every pair. Ablation arms force the
/// corresponding factor to 1; w_total is always the exact product.
inline WeightedPairDataset attach_weights(const PairDataset& dataset,
                                          HpoMode mode) {
  WeightedPairDataset out;
  out.mode = mode;
  out.groups.reserve(dataset.groups.size());

  const bool use_intra = mode == HpoMode::Intra || mode == HpoMode::Both;
  const bool use_inter = mode == HpoMode::Inter || mode == HpoMode::Both;

  std::vector<RewardVector> reward_vectors;
  reward_vectors.reserve(dataset.groups.size());
  for (const auto& g : dataset.groups) reward_vectors.push_back(g.rewards);

  std::vector<double> w_inter(dataset.groups.size(), 1.0);
  if (use_inter && !dataset.groups.empty()) {
    w_inter = inter_weights(reward_vectors);
  }

  for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
    const auto& group = dataset.groups[g];
    WeightedGroup wg;
    wg.group_id = group.group_id;
    wg.candidate_ids = group.candidate_ids;
    wg.rewards = group.rewards;
    wg.reward_stddev = population_stddev(group.rewards.rewards);

    std::vector<double> w_intra(group.pairs.size(), 1.0);
    if (use_intra) w_intra = intra_weights(group.pairs);

    wg.pairs.reserve(group.pairs.size());
    for (std::size_t p = 0; p < group.pairs.size(); ++p) {
      WeightedPair wp;
      wp.pair = group.pairs[p];
      wp.w_intra = w_intra[p];
      wp.w_inter = w_inter[g];
      wp.w_total = wp.w_intra * wp.w_inter;
      wg.pairs.push_back(std::move(wp));
    }
    out.groups.push_back(std::move(wg));
  }
  return out;
}

}  // namespace dp2o
