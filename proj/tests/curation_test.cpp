#include "dp2o/curation.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <vector>

#include "dp2o/artifacts.hpp"
#include "dp2o/rng.hpp"

namespace {

using namespace dp2o;

RewardVector rewards_of(std::vector<double> values) {
  return RewardVector{"g", std::move(values)};
}

std::vector<std::string> ids_for(std::size_t m) {
  std::vector<std::string> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = "c" + std::to_string(i);
  return ids;
}

TEST(SelectExtremes, TopAndBottomOfRanking) {
  const auto rewards = rewards_of({0.1, 0.9, 0.4, 0.6});
  const auto ranking = rank_candidates(rewards);  // [1, 3, 2, 0]
  {
    const auto [top, bottom] = select_extremes(ranking, 1);
    EXPECT_EQ(top, (std::vector<std::size_t>{1}));
    EXPECT_EQ(bottom, (std::vector<std::size_t>{0}));
  }
  {
    const auto [top, bottom] = select_extremes(ranking, 2);
    EXPECT_EQ(top, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(bottom, (std::vector<std::size_t>{2, 0}));
  }
  try {
    select_extremes(ranking, 3);
    FAIL() << "expected RatioTooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ratio_too_large);
  }
}

TEST(BuildPairs, CartesianProductCounts) {
  Prng rng(4);
  for (const std::size_t n : {std::size_t{1}, std::size_t{4}, std::size_t{8}}) {
    const std::size_t m = 4 * n;
    std::vector<double> values(m);
    for (double& v : values) v = rng.uniform();
    const auto rewards = rewards_of(values);
    const auto ranking = rank_candidates(rewards);
    const auto [top, bottom] = select_extremes(ranking, n);
    const auto pairs = build_pairs(top, bottom, rewards, ids_for(m));
    EXPECT_EQ(pairs.size(), n * n);
    for (const auto& pair : pairs) {
      EXPECT_GE(pair.reward_gap, 0.0);
      EXPECT_GE(rewards.rewards[pair.winner_index],
                rewards.rewards[pair.loser_index]);
    }
  }
}

TEST(BuildPairs, DominanceWithLargeSelection) {
  // N=8, M=32: 64 pairs; every winner beats every loser.
  Prng rng(21);
  std::vector<double> values(32);
  for (double& v : values) v = rng.uniform();
  const auto rewards = rewards_of(values);
  const auto ranking = rank_candidates(rewards);
  const auto [top, bottom] = select_extremes(ranking, 8);
  const auto pairs = build_pairs(top, bottom, rewards, ids_for(32));
  ASSERT_EQ(pairs.size(), 64u);

  double weakest_winner = 1.0;
  double strongest_loser = 0.0;
  for (const auto& pair : pairs) {
    weakest_winner =
        std::min(weakest_winner, rewards.rewards[pair.winner_index]);
    strongest_loser =
        std::max(strongest_loser, rewards.rewards[pair.loser_index]);
  }
  EXPECT_GE(weakest_winner, strongest_loser);
}

TEST(BuildPairs, RejectsOverlap) {
  const auto rewards = rewards_of({0.1, 0.9});
  EXPECT_THROW(build_pairs({0}, {0}, rewards, ids_for(2)), Error);
}

TEST(CurateGroup, DeterministicPairOrder) {
  const auto rewards = rewards_of({0.9, 0.1, 0.8, 0.2});
  const auto group = curate_group(ids_for(4), rewards, CurationConfig{2, 0, false});
  ASSERT_EQ(group.pairs.size(), 4u);
  // top = [0, 2], bottom = [1, 3] by reward; order is top-major.
  EXPECT_EQ(group.pairs[0].winner_id, "c0");
  EXPECT_EQ(group.pairs[0].loser_id, "c3");
  EXPECT_EQ(group.pairs[1].winner_id, "c0");
  EXPECT_EQ(group.pairs[1].loser_id, "c1");
  EXPECT_EQ(group.pairs[2].winner_id, "c2");
  EXPECT_EQ(group.pairs[2].loser_id, "c3");
  EXPECT_EQ(group.pairs[3].winner_id, "c2");
  EXPECT_EQ(group.pairs[3].loser_id, "c1");
}

TEST(CurateGroup, StrictGroupSize) {
  const auto rewards = rewards_of({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  try {
    curate_group(ids_for(6), rewards, CurationConfig{2, 8, true});
    FAIL() << "expected GroupSizeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::group_size_mismatch);
  }
}

MetricSet simple_metrics() {
  return MetricSet({
      {"fr", MetricFamily::FullReference, MetricDirection::HigherBetter},
      {"nr", MetricFamily::NoReference, MetricDirection::HigherBetter},
  });
}

std::vector<CandidateGroup> random_corpus(std::size_t n_groups, std::size_t m,
                                          std::uint64_t seed) {
  Prng rng(seed);
  std::vector<CandidateGroup> groups;
  for (std::size_t g = 0; g < n_groups; ++g) {
    CandidateGroup group;
    group.group_id = "g" + std::to_string(g);
    group.n_metrics = 2;
    for (std::size_t c = 0; c < m; ++c) {
      group.candidate_ids.push_back("c" + std::to_string(c));
      group.raw_scores.push_back(rng.normal());
      group.raw_scores.push_back(rng.normal());
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

TEST(CurateDataset, CountingOracle) {
  {
    const auto dataset = curate_dataset(random_corpus(10, 6, 5),
                                        simple_metrics(), {2, 0, false});
    EXPECT_EQ(dataset.total_pairs(), 40u);  // 10 * 2^2
  }
  {
    const auto dataset = curate_dataset(random_corpus(100, 64, 6),
                                        simple_metrics(), {4, 64, true});
    std::size_t oracle = 0;
    for (const auto& group : dataset.groups) oracle += 4u * 4u;
    EXPECT_EQ(oracle, 1600u);
    EXPECT_EQ(dataset.total_pairs(), oracle);
  }
}

TEST(CurateDataset, ByteIdenticalSerialization) {
  const auto corpus = random_corpus(8, 8, 11);
  const auto a = curate_dataset(corpus, simple_metrics(), {2, 8, true});
  const auto b = curate_dataset(corpus, simple_metrics(), {2, 8, true});
  std::ostringstream sa, sb;
  write_pairs_jsonl(sa, a);
  write_pairs_jsonl(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_FALSE(sa.str().empty());
}

// Enlarging a group with an intermediate-reward candidate leaves the pair
// set unchanged.
TEST(CurateGroup, MonotoneInGroupSize) {
  const auto small = curate_group(ids_for(4), rewards_of({0.9, 0.1, 0.8, 0.2}),
                                  CurationConfig{1, 0, false});
  auto ids = ids_for(4);
  ids.push_back("mid");
  const auto large = curate_group(ids, rewards_of({0.9, 0.1, 0.8, 0.2, 0.5}),
                                  CurationConfig{1, 0, false});
  ASSERT_EQ(small.pairs.size(), large.pairs.size());
  for (std::size_t i = 0; i < small.pairs.size(); ++i) {
    EXPECT_EQ(small.pairs[i].winner_id, large.pairs[i].winner_id);
    EXPECT_EQ(small.pairs[i].loser_id, large.pairs[i].loser_id);
    EXPECT_DOUBLE_EQ(small.pairs[i].reward_gap, large.pairs[i].reward_gap);
  }
}

}  // namespace
