#include "dp2o/score_model.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "dp2o/rng.hpp"

namespace {

using namespace dp2o;

MetricSet two_metric_set() {
  return MetricSet({
      {"lpips", MetricFamily::FullReference, MetricDirection::LowerBetter},
      {"musiq", MetricFamily::NoReference, MetricDirection::HigherBetter},
  });
}

ScoreTable parse_csv(const std::string& body, const MetricSet& metrics) {
  std::istringstream in(body);
  return parse_score_table(in, TableFormat::Csv, metrics);
}

ScoreTable parse_jsonl(const std::string& body, const MetricSet& metrics) {
  std::istringstream in(body);
  return parse_score_table(in, TableFormat::Jsonl, metrics);
}

std::string dense_csv(std::size_t groups, std::size_t candidates,
                      const MetricSet& metrics, std::uint64_t seed) {
  Prng rng(seed);
  std::ostringstream out;
  out << "group_id,candidate_id,metric,value\n";
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < candidates; ++c) {
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        out << 'g' << g << ",c" << c << ',' << metrics.at(m).name << ','
            << rng.normal() << '\n';
      }
    }
  }
  return out.str();
}

TEST(MetricSet, ManifestRoundTrip) {
  const auto metrics = MetricSet::from_manifest_json(R"([
    {"name": "lpips", "family": "FR", "direction": "lower"},
    {"name": "musiq", "family": "NR", "direction": "higher"}
  ])");
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(metrics.at(0).name, "lpips");
  EXPECT_EQ(metrics.at(0).family, MetricFamily::FullReference);
  EXPECT_EQ(metrics.at(0).direction, MetricDirection::LowerBetter);
  EXPECT_EQ(metrics.index_of("musiq"), 1u);
  EXPECT_FALSE(metrics.index_of("missing").has_value());
}

TEST(MetricSet, RejectsBadManifest) {
  EXPECT_THROW(MetricSet::from_manifest_json("not json"), Error);
  EXPECT_THROW(MetricSet::from_manifest_json(R"({"name": "x"})"), Error);
  EXPECT_THROW(MetricSet::from_manifest_json(
                   R"([{"name": "a", "family": "XX", "direction": "higher"}])"),
               Error);
  // duplicate names
  EXPECT_THROW(MetricSet::from_manifest_json(R"([
    {"name": "a", "family": "FR", "direction": "higher"},
    {"name": "a", "family": "NR", "direction": "higher"}
  ])"),
               Error);
}

TEST(ParseScoreTable, CsvHappyPath) {
  const auto metrics = two_metric_set();
  const auto table = parse_csv(dense_csv(2, 3, metrics, 1), metrics);
  EXPECT_EQ(table.records.size(), 12u);  // 2 groups x 3 candidates x 2 metrics
  const auto groups = group_candidates(table);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].size(), 3u);
  EXPECT_EQ(groups[1].size(), 3u);
}

TEST(ParseScoreTable, DuplicateTriple) {
  const auto metrics = two_metric_set();
  const std::string body =
      "group_id,candidate_id,metric,value\n"
      "g0,c0,lpips,0.5\n"
      "g0,c0,musiq,60\n"
      "g0,c0,lpips,0.6\n";
  try {
    parse_csv(body, metrics);
    FAIL() << "expected DuplicateTriple";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::duplicate_triple);
    EXPECT_NE(std::string(e.what()).find("g0, c0, lpips"), std::string::npos);
  }
}

TEST(ParseScoreTable, NonFiniteJsonlValue) {
  const auto metrics = two_metric_set();
  const std::string body =
      R"({"group_id":"g0","candidate_id":"c0","metric":"lpips","value":"NaN"})"
      "\n";
  try {
    parse_jsonl(body, metrics);
    FAIL() << "expected NonFiniteValue";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite_value);
  }
}

TEST(ParseScoreTable, UnknownMetric) {
  const auto metrics = two_metric_set();
  const std::string body =
      "group_id,candidate_id,metric,value\n"
      "g0,c0,psnr,30\n";
  try {
    parse_csv(body, metrics);
    FAIL() << "expected UnknownMetric";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_metric);
  }
}

TEST(ParseScoreTable, MalformedRows) {
  const auto metrics = two_metric_set();
  EXPECT_THROW(parse_csv("group_id,candidate_id,metric\n", metrics), Error);
  EXPECT_THROW(
      parse_csv("group_id,candidate_id,metric,value\ng0,c0,lpips\n", metrics),
      Error);
  EXPECT_THROW(
      parse_csv("group_id,candidate_id,metric,value\ng0,c0,lpips,abc\n",
                metrics),
      Error);
  EXPECT_THROW(parse_jsonl("{\"group_id\": 3}\n", metrics), Error);
  EXPECT_THROW(parse_jsonl("not json\n", metrics), Error);
}

TEST(ParseScoreTable, SparseGroupRejected) {
  const auto metrics = two_metric_set();
  const std::string body =
      "group_id,candidate_id,metric,value\n"
      "g0,c0,lpips,0.5\n"
      "g0,c0,musiq,60\n"
      "g0,c1,lpips,0.4\n";
  try {
    parse_csv(body, metrics);
    FAIL() << "expected SparseGroup";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::sparse_group);
  }
}

TEST(GroupCandidates, SingletonGroupRejected) {
  const auto metrics = two_metric_set();
  const auto table = parse_csv(
      "group_id,candidate_id,metric,value\n"
      "g0,c0,lpips,0.5\n"
      "g0,c0,musiq,60\n",
      metrics);
  try {
    group_candidates(table);
    FAIL() << "expected SingletonGroup";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::singleton_group);
  }
}

TEST(GroupCandidates, PartitionPreservesRecords) {
  const auto metrics = two_metric_set();
  const auto table = parse_csv(dense_csv(5, 4, metrics, 3), metrics);
  const auto groups = group_candidates(table);

  std::size_t cells = 0;
  for (const auto& group : groups) cells += group.size() * group.n_metrics;
  EXPECT_EQ(cells, table.records.size());

  // Every record's value lands in its group cell untouched.
  for (const auto& record : table.records) {
    const auto git = std::find_if(
        groups.begin(), groups.end(),
        [&](const CandidateGroup& g) { return g.group_id == record.group_id; });
    ASSERT_NE(git, groups.end());
    const auto cit = std::find(git->candidate_ids.begin(),
                               git->candidate_ids.end(), record.candidate_id);
    ASSERT_NE(cit, git->candidate_ids.end());
    const auto c = static_cast<std::size_t>(cit - git->candidate_ids.begin());
    const auto m = table.metrics.index_of(record.metric);
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(git->score(c, *m), record.value);
  }
}

TEST(SerializeScoreTable, RoundTripBothFormats) {
  const auto metrics = two_metric_set();
  for (const auto format : {TableFormat::Csv, TableFormat::Jsonl}) {
    const auto table = parse_csv(dense_csv(4, 3, metrics, 17), metrics);
    const std::string serialized = serialize_score_table(table, format);
    std::istringstream in(serialized);
    const auto reparsed = parse_score_table(in, format, metrics);
    ASSERT_EQ(reparsed.records.size(), table.records.size());
    for (std::size_t i = 0; i < table.records.size(); ++i) {
      EXPECT_EQ(reparsed.records[i].group_id, table.records[i].group_id);
      EXPECT_EQ(reparsed.records[i].candidate_id, table.records[i].candidate_id);
      EXPECT_EQ(reparsed.records[i].metric, table.records[i].metric);
      EXPECT_EQ(reparsed.records[i].value, table.records[i].value);
    }
    EXPECT_EQ(serialize_score_table(reparsed, format), serialized);
  }
}

// Desk-scale version of the offline corpus shape: 100 groups x M=64.
TEST(GroupCandidates, DeskScaleCorpus) {
  const auto metrics = two_metric_set();
  const auto table = parse_csv(dense_csv(100, 64, metrics, 23), metrics);
  EXPECT_EQ(table.records.size(), 100u * 64u * 2u);
  const auto groups = group_candidates(table);
  ASSERT_EQ(groups.size(), 100u);
  for (const auto& group : groups) EXPECT_EQ(group.size(), 64u);
}

}  // namespace
