#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dp2o/error.hpp"

namespace dp2o {

enum class MetricFamily { FullReference, NoReference };
enum class MetricDirection { HigherBetter, LowerBetter };

struct MetricSpec {
  std::string name;
  MetricFamily family = MetricFamily::NoReference;
  MetricDirection direction = MetricDirection::HigherBetter;
};

/// Ordered set of metric declarations. Column order everywhere downstream
/// follows the declaration order in the manifest.
class MetricSet {
 public:
  MetricSet() = default;

  explicit MetricSet(std::vector<MetricSpec> metrics)
      : metrics_(std::move(metrics)) {
    for (std::size_t i = 0; i < metrics_.size(); ++i) {
      auto [it, inserted] = index_.emplace(metrics_[i].name, i);
      if (!inserted) {
        fail(Errc::bad_config, "duplicate metric name '" + metrics_[i].name +
                                   "' in metric set");
      }
    }
  }

  /// Parses a manifest: JSON array of {name, family: "FR"|"NR",
  /// direction: "higher"|"lower"}.
  static MetricSet from_manifest_json(const std::string& text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::bad_config, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) fail(Errc::bad_config, "manifest must be a JSON array");
    std::vector<MetricSpec> specs;
    for (const auto& entry : doc) {
      if (!entry.is_object() || !entry.contains("name") ||
          !entry.contains("family") || !entry.contains("direction")) {
        fail(Errc::bad_config,
             "manifest entries need name, family and direction fields");
      }
      MetricSpec spec;
      spec.name = entry.at("name").get<std::string>();
      const auto family = entry.at("family").get<std::string>();
      if (family == "FR") {
        spec.family = MetricFamily::FullReference;
      } else if (family == "NR") {
        spec.family = MetricFamily::NoReference;
      } else {
        fail(Errc::bad_config, "metric '" + spec.name +
                                   "': family must be \"FR\" or \"NR\", got \"" +
                                   family + "\"");
      }
      const auto direction = entry.at("direction").get<std::string>();
      if (direction == "higher") {
        spec.direction = MetricDirection::HigherBetter;
      } else if (direction == "lower") {
        spec.direction = MetricDirection::LowerBetter;
      } else {
        fail(Errc::bad_config,
             "metric '" + spec.name +
                 "': direction must be \"higher\" or \"lower\", got \"" +
                 direction + "\"");
      }
      specs.push_back(std::move(spec));
    }
    return MetricSet(std::move(specs));
  }

  std::size_t size() const { return metrics_.size(); }
  bool empty() const { return metrics_.empty(); }
  const MetricSpec& at(std::size_t i) const { return metrics_.at(i); }
  const std::vector<MetricSpec>& specs() const { return metrics_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t family_count(MetricFamily family) const {
    std::size_t n = 0;
    for (const auto& m : metrics_)
      if (m.family == family) ++n;
    return n;
  }

  /// A reward-capable set carries at least one metric of each family.
  void require_reward_capable() const {
    if (family_count(MetricFamily::FullReference) == 0 ||
        family_count(MetricFamily::NoReference) == 0) {
      fail(Errc::empty_family,
           "metric set needs at least one FR and one NR metric");
    }
  }

 private:
  std::vector<MetricSpec> metrics_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ScoreRecord {
  std::string group_id;
  std::string candidate_id;
  std::string metric;
  double value = 0.0;
};

/// Dense table of raw per-candidate, per-metric scores in ingestion order.
struct ScoreTable {
  MetricSet metrics;
  std::vector<ScoreRecord> records;
};

/// The M rollouts of one conditioning input with their raw score matrix
/// (rows follow candidate ingestion order, columns follow the MetricSet).
struct CandidateGroup {
  std::string group_id;
  std::vector<std::string> candidate_ids;
  std::vector<double> raw_scores;  // row-major, M x |metrics|
  std::size_t n_metrics = 0;
  bool direction_aligned = false;

  std::size_t size() const { return candidate_ids.size(); }
  double score(std::size_t candidate, std::size_t metric) const {
    return raw_scores[candidate * n_metrics + metric];
  }
  double& score(std::size_t candidate, std::size_t metric) {
    return raw_scores[candidate * n_metrics + metric];
  }
};

enum class TableFormat { Csv, Jsonl };

namespace detail {

inline double parse_score_value(std::string_view text, std::size_t line_no) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail(Errc::malformed_row, "line " + std::to_string(line_no) +
                                  ": cannot parse value '" + std::string(text) +
                                  "'");
  }
  if (!std::isfinite(value)) {
    fail(Errc::non_finite_value, "line " + std::to_string(line_no) +
                                     ": non-finite value '" +
                                     std::string(text) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string triple_key(const ScoreRecord& r) {
  return r.group_id + '\x1f' + r.candidate_id + '\x1f' + r.metric;
}

/// Full-table checks shared by both parsers: known metrics, no duplicate
/// triples, every candidate dense over the metric set.
inline void validate_table(const ScoreTable& table) {
  std::unordered_set<std::string> seen;
  seen.reserve(table.records.size());
  // (group, candidate) -> bitmap of metrics present
  std::unordered_map<std::string, std::vector<bool>> coverage;
  for (const auto& record : table.records) {
    const auto metric_index = table.metrics.index_of(record.metric);
    if (!metric_index) {
      fail(Errc::unknown_metric, "metric '" + record.metric +
                                     "' is not declared in the manifest");
    }
    if (!seen.insert(triple_key(record)).second) {
      fail(Errc::duplicate_triple, "duplicate (" + record.group_id + ", " +
                                       record.candidate_id + ", " +
                                       record.metric + ")");
    }
    auto& bits = coverage[record.group_id + '\x1f' + record.candidate_id];
    if (bits.empty()) bits.resize(table.metrics.size(), false);
    bits[*metric_index] = true;
  }
  for (const auto& [key, bits] : coverage) {
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i]) {
        const auto sep = key.find('\x1f');
        fail(Errc::sparse_group,
             "candidate (" + key.substr(0, sep) + ", " + key.substr(sep + 1) +
                 ") is missing metric '" + table.metrics.at(i).name + "'");
      }
    }
  }
}

}  // namespace detail

/// Ingests a raw score table. Record order is preserved; the result
/// satisfies all table invariants (dense, finite, duplicate-free).
inline ScoreTable parse_score_table(std::istream& source, TableFormat format,
                                    const MetricSet& metrics) {
  ScoreTable table;
  table.metrics = metrics;
  std::string line;
  std::size_t line_no = 0;

  if (format == TableFormat::Csv) {
    if (!std::getline(source, line)) {
      fail(Errc::malformed_row, "empty CSV input");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "group_id,candidate_id,metric,value") {
      fail(Errc::malformed_row,
           "CSV header must be 'group_id,candidate_id,metric,value'");
    }
    while (std::getline(source, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto fields = detail::split_csv_line(line);
      if (fields.size() != 4) {
        fail(Errc::malformed_row, "line " + std::to_string(line_no) +
                                      ": expected 4 fields, got " +
                                      std::to_string(fields.size()));
      }
      ScoreRecord record;
      record.group_id = std::string(fields[0]);
      record.candidate_id = std::string(fields[1]);
      record.metric = std::string(fields[2]);
      record.value = detail::parse_score_value(fields[3], line_no);
      if (record.group_id.empty() || record.candidate_id.empty() ||
          record.metric.empty()) {
        fail(Errc::malformed_row,
             "line " + std::to_string(line_no) + ": empty identifier");
      }
      table.records.push_back(std::move(record));
    }
  } else {
    while (std::getline(source, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::malformed_row, "line " + std::to_string(line_no) +
                                      ": invalid JSON: " + e.what());
      }
      if (!obj.is_object() || !obj.contains("group_id") ||
          !obj.contains("candidate_id") || !obj.contains("metric") ||
          !obj.contains("value")) {
        fail(Errc::malformed_row,
             "line " + std::to_string(line_no) +
                 ": object needs group_id, candidate_id, metric, value");
      }
      ScoreRecord record;
      try {
        record.group_id = obj.at("group_id").get<std::string>();
        record.candidate_id = obj.at("candidate_id").get<std::string>();
        record.metric = obj.at("metric").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        fail(Errc::malformed_row,
             "line " + std::to_string(line_no) + ": identifier fields must be strings");
      }
      const auto& value = obj.at("value");
      if (value.is_number()) {
        record.value = value.get<double>();
        if (!std::isfinite(record.value)) {
          fail(Errc::non_finite_value,
               "line " + std::to_string(line_no) + ": non-finite value");
        }
      } else if (value.is_string()) {
        // JSON has no NaN literal; tools that emit "NaN" strings get the
        // dedicated error rather than a generic schema failure.
        const auto text = value.get<std::string>();
        double v = 0.0;
        auto [ptr, ec] =
            std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && ptr == text.data() + text.size() &&
            !std::isfinite(v)) {
          fail(Errc::non_finite_value, "line " + std::to_string(line_no) +
                                           ": non-finite value '" + text +
                                           "'");
        }
        fail(Errc::malformed_row,
             "line " + std::to_string(line_no) + ": value must be a number");
      } else {
        fail(Errc::malformed_row,
             "line " + std::to_string(line_no) + ": value must be a number");
      }
      table.records.push_back(std::move(record));
    }
  }

  detail::validate_table(table);
  return table;
}

inline std::string serialize_score_table(const ScoreTable& table,
                                         TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    out << "group_id,candidate_id,metric,value\n";
    for (const auto& r : table.records) {
      out << r.group_id << ',' << r.candidate_id << ',' << r.metric << ','
          << nlohmann::json(r.value).dump() << '\n';
    }
  } else {
    for (const auto& r : table.records) {
      nlohmann::ordered_json obj;
      obj["group_id"] = r.group_id;
      obj["candidate_id"] = r.candidate_id;
      obj["metric"] = r.metric;
      obj["value"] = r.value;
      out << obj.dump() << '\n';
    }
  }
  return out.str();
}

/// Partitions a valid table into per-group candidate matrices. Groups are
/// ordered by first appearance, candidates by ingestion order within the
/// group.
inline std::vector<CandidateGroup> group_candidates(const ScoreTable& table) {
  const std::size_t k = table.metrics.size();
  std::vector<CandidateGroup> groups;
  std::unordered_map<std::string, std::size_t> group_index;
  std::vector<std::unordered_map<std::string, std::size_t>> candidate_index;
  std::vector<std::vector<bool>> filled;

  for (const auto& record : table.records) {
    const auto metric_index = table.metrics.index_of(record.metric);
    if (!metric_index) {
      fail(Errc::unknown_metric,
           "metric '" + record.metric + "' is not declared in the manifest");
    }
    auto [git, g_new] = group_index.emplace(record.group_id, groups.size());
    if (g_new) {
      groups.push_back(CandidateGroup{record.group_id, {}, {}, k, false});
      candidate_index.emplace_back();
      filled.emplace_back();
    }
    const std::size_t g = git->second;
    auto& group = groups[g];
    auto [cit, c_new] =
        candidate_index[g].emplace(record.candidate_id, group.size());
    if (c_new) {
      group.candidate_ids.push_back(record.candidate_id);
      group.raw_scores.resize(group.raw_scores.size() + k, 0.0);
      filled[g].resize(filled[g].size() + k, false);
    }
    const std::size_t c = cit->second;
    const std::size_t cell = c * k + *metric_index;
    if (filled[g][cell]) {
      fail(Errc::duplicate_triple, "duplicate (" + record.group_id + ", " +
                                       record.candidate_id + ", " +
                                       record.metric + ")");
    }
    filled[g][cell] = true;
    group.raw_scores[cell] = record.value;
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    for (std::size_t c = 0; c < group.size(); ++c) {
      for (std::size_t m = 0; m < k; ++m) {
        if (!filled[g][c * k + m]) {
          fail(Errc::sparse_group, "candidate (" + group.group_id + ", " +
                                       group.candidate_ids[c] +
                                       ") is missing metric '" +
                                       table.metrics.at(m).name + "'");
        }
      }
    }
    if (group.size() < 2) {
      fail(Errc::singleton_group,
           "group '" + group.group_id + "' has a single candidate");
    }
  }
  return groups;
}

}  // namespace dp2o
