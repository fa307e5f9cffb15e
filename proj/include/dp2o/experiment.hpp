#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dp2o/artifacts.hpp"
#include "dp2o/curation.hpp"
#include "dp2o/dpo.hpp"
#include "dp2o/error.hpp"
#include "dp2o/hpo.hpp"
#include "dp2o/reward.hpp"
#include "dp2o/rollout.hpp"
#include "dp2o/stats.hpp"
#include "dp2o/toy_task.hpp"

namespace dp2o {

// ---------------------------------------------------------------------------
// End-to-end toy pipeline: pretrain a reference, roll out candidates, score
// them with the synthetic metrics through the regular reward path, curate
// and weight pairs, train the policy, and evaluate against the reference.

struct ExperimentConfig {
  ToyTaskConfig task;
  MlpArchitecture arch;
  ScheduleKind schedule = ScheduleKind::Flow;
  PredictionHead head = PredictionHead::Velocity;
  int sampler_steps = 16;

  std::size_t train_conditions = 100;
  std::size_t heldout_conditions = 20;
  std::size_t rollouts_per_condition = 16;  // M
  std::size_t selection_n = 4;              // N
  HpoMode hpo_mode = HpoMode::Both;

  PretrainConfig pretrain;
  DpoConfig dpo;

  std::size_t eval_rollouts = 16;  // per model, pooled with the reference
  std::uint64_t seed = 1;

  SamplerConfig sampler() const { return {schedule, head, sampler_steps}; }

  /// Copies the shared knobs into the nested stage configs and derives
  /// per-stage seeds from the master seed.
  ExperimentConfig normalized() const {
    ExperimentConfig c = *this;
    c.pretrain.task = c.task;
    c.pretrain.arch = c.arch;
    c.pretrain.schedule = c.schedule;
    c.pretrain.head = c.head;
    c.pretrain.seed = derive_seed(c.seed, /*tag=*/0x11);
    c.dpo.schedule = c.schedule;
    c.dpo.head = c.head;
    c.dpo.hpo_mode = c.hpo_mode;
    c.dpo.seed = derive_seed(c.seed, /*tag=*/0x22);
    return c;
  }
};

namespace detail {

inline std::string zero_padded(std::size_t value, std::size_t width) {
  std::string text = std::to_string(value);
  while (text.size() < width) text.insert(text.begin(), '0');
  return text;
}

}  // namespace detail

inline std::string toy_group_id(std::size_t index) {
  return "g" + detail::zero_padded(index, 4);
}

inline std::string toy_candidate_id(std::size_t index) {
  return "c" + detail::zero_padded(index, 3);
}

/// M reproducible rollouts for one condition; rollout k's seed depends only
/// on (base_seed, condition index, k), so enlarging M extends the set
/// without changing existing members.
inline std::vector<std::vector<double>> rollout_samples(
    const NetworkParams& params, const Condition& condition,
    std::size_t condition_index, std::size_t m, const SamplerConfig& sampler,
    std::uint64_t base_seed) {
  std::vector<std::vector<double>> samples;
  samples.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::uint64_t seed = derive_seed(base_seed, condition_index, k);
    samples.push_back(
        sample_rollout(params, condition.cond, seed, sampler).sample);
  }
  return samples;
}

/// Scores reference rollouts for every condition into a dense ScoreTable,
/// exactly as an external IQA labeling stage would produce it.
inline ScoreTable build_toy_score_table(
    const std::vector<Condition>& conditions,
    const std::vector<std::vector<std::vector<double>>>& samples_per_condition) {
  ScoreTable table;
  table.metrics = toy_metric_set();
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& samples = samples_per_condition[i];
    std::vector<std::string> candidate_ids(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
      candidate_ids[k] = toy_candidate_id(k);
    }
    append_toy_scores(table.records, toy_group_id(i), candidate_ids, samples,
                      conditions[i].x_star);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Held-out evaluation. Reference and policy rollouts for one condition share
// the same noise seeds and are normalized together in a single pooled group,
// so their reward statistics are directly comparable.

struct EvalSummary {
  RolloutStats reference;
  RolloutStats policy;
};

inline EvalSummary evaluate_against_reference(
    const NetworkParams& reference, const NetworkParams& policy,
    const std::vector<Condition>& conditions, std::size_t eval_m,
    const SamplerConfig& sampler, std::uint64_t eval_seed) {
  if (conditions.empty()) fail(Errc::empty_corpus, "no held-out conditions");
  EvalSummary sum;
  sum.reference.m = eval_m;
  sum.policy.m = eval_m;
  const MetricSet metrics = toy_metric_set();

  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto ref_samples = rollout_samples(reference, conditions[i], i,
                                             eval_m, sampler, eval_seed);
    const auto pol_samples = rollout_samples(policy, conditions[i], i, eval_m,
                                             sampler, eval_seed);

    CandidateGroup group;
    group.group_id = toy_group_id(i);
    group.n_metrics = metrics.size();
    std::vector<std::vector<double>> all_samples = ref_samples;
    all_samples.insert(all_samples.end(), pol_samples.begin(),
                       pol_samples.end());
    for (std::size_t k = 0; k < all_samples.size(); ++k) {
      group.candidate_ids.push_back((k < eval_m ? "ref" : "pol") +
                                    detail::zero_padded(k % eval_m, 3));
      group.raw_scores.push_back(
          fidelity_score(all_samples[k], conditions[i].x_star));
      group.raw_scores.push_back(naturalness_score(all_samples[k]));
    }
    const RewardVector rewards = compute_group_rewards(group, metrics);
    const std::span<const double> all(rewards.rewards);
    const RolloutStats ref_stats = rollout_stats(all.subspan(0, eval_m));
    const RolloutStats pol_stats = rollout_stats(all.subspan(eval_m, eval_m));
    sum.reference.best += ref_stats.best;
    sum.reference.mean += ref_stats.mean;
    sum.reference.worst += ref_stats.worst;
    sum.policy.best += pol_stats.best;
    sum.policy.mean += pol_stats.mean;
    sum.policy.worst += pol_stats.worst;
  }
  const double n = static_cast<double>(conditions.size());
  sum.reference.best /= n;
  sum.reference.mean /= n;
  sum.reference.worst /= n;
  sum.policy.best /= n;
  sum.policy.mean /= n;
  sum.policy.worst /= n;
  return sum;
}

// ---------------------------------------------------------------------------

struct ExperimentResult {
  ExperimentConfig config;  // normalized form actually used
  NetworkParams reference;
  std::vector<Condition> train_conditions;
  std::vector<Condition> heldout_conditions;
  std::vector<GroupRewards> group_rewards;
  PairDataset pairs;
  WeightedPairDataset weighted;
  TrainRun run;
  EvalSummary final_eval;
};

/// Resolves weighted pairs to their rollout payloads for the trainer.
inline std::vector<TrainingPair> resolve_training_pairs(
    const WeightedPairDataset& weighted,
    const std::vector<std::vector<std::vector<double>>>& samples_per_condition,
    const std::vector<Condition>& conditions) {
  std::vector<TrainingPair> out;
  out.reserve(weighted.total_pairs());
  for (std::size_t g = 0; g < weighted.groups.size(); ++g) {
    const auto& group = weighted.groups[g];
    for (const auto& wp : group.pairs) {
      TrainingPair tp;
      tp.x0_winner = samples_per_condition[g][wp.pair.winner_index];
      tp.x0_loser = samples_per_condition[g][wp.pair.loser_index];
      tp.cond = conditions[g].cond;
      tp.w_intra = wp.w_intra;
      tp.w_inter = wp.w_inter;
      tp.w_total = wp.w_total;
      out.push_back(std::move(tp));
    }
  }
  return out;
}

/// Runs the whole pipeline. When `reference` is provided the pretraining
/// stage is skipped. Progress notes go to `log` when given.
inline ExperimentResult run_experiment(
    const ExperimentConfig& raw_config,
    std::optional<NetworkParams> reference = std::nullopt,
    std::ostream* log = nullptr) {
  const ExperimentConfig config = raw_config.normalized();
  if (2 * config.selection_n > config.rollouts_per_condition) {
    fail(Errc::ratio_too_large,
         "2N = " + std::to_string(2 * config.selection_n) + " exceeds M = " +
             std::to_string(config.rollouts_per_condition));
  }

  ExperimentResult result;
  result.config = config;

  if (log) *log << "pretraining reference model...\n";
  result.reference =
      reference ? std::move(*reference) : pretrain_reference(config.pretrain);

  result.train_conditions = make_conditions(
      config.train_conditions, config.task, derive_seed(config.seed, 0x33));
  result.heldout_conditions = make_conditions(
      config.heldout_conditions, config.task, derive_seed(config.seed, 0x44));

  if (log) *log << "generating " << config.rollouts_per_condition
                << " rollouts for " << config.train_conditions
                << " conditions...\n";
  const std::uint64_t rollout_seed = derive_seed(config.seed, 0x55);
  std::vector<std::vector<std::vector<double>>> samples;
  samples.reserve(result.train_conditions.size());
  for (std::size_t i = 0; i < result.train_conditions.size(); ++i) {
    samples.push_back(rollout_samples(result.reference,
                                      result.train_conditions[i], i,
                                      config.rollouts_per_condition,
                                      config.sampler(), rollout_seed));
  }

  const ScoreTable table =
      build_toy_score_table(result.train_conditions, samples);
  const std::vector<CandidateGroup> groups = group_candidates(table);

  const CurationConfig curation{config.selection_n,
                                config.rollouts_per_condition,
                                /*strict_m=*/true};
  result.pairs = curate_dataset(groups, table.metrics, curation);
  result.weighted = attach_weights(result.pairs, config.hpo_mode);

  result.group_rewards.reserve(result.pairs.groups.size());
  for (const auto& g : result.pairs.groups) {
    result.group_rewards.push_back(
        GroupRewards{g.group_id, g.candidate_ids, g.rewards});
  }

  const std::vector<TrainingPair> training_pairs = resolve_training_pairs(
      result.weighted, samples, result.train_conditions);

  const std::uint64_t eval_seed = derive_seed(config.seed, 0x66);
  const EvalHook hook = [&](const NetworkParams& policy, int) {
    return evaluate_against_reference(result.reference, policy,
                                      result.heldout_conditions,
                                      config.eval_rollouts, config.sampler(),
                                      eval_seed)
        .policy;
  };

  if (log) *log << "training " << config.dpo.iterations << " iterations on "
                << training_pairs.size() << " pairs...\n";
  result.run = train(training_pairs, result.reference, config.dpo, hook);
  result.final_eval = evaluate_against_reference(
      result.reference, result.run.final_params, result.heldout_conditions,
      config.eval_rollouts, config.sampler(), eval_seed);
  return result;
}

/// Writes every pipeline artifact for one experiment into `dir`.
inline void write_experiment_artifacts(const std::filesystem::path& dir,
                                       const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("rewards.jsonl");
    write_rewards_jsonl(out, result.group_rewards);
  }
  {
    auto out = open("pairs.jsonl");
    write_pairs_jsonl(out, result.pairs);
  }
  {
    auto out = open("weighted_pairs.jsonl");
    write_weighted_pairs_jsonl(out, result.weighted);
  }
  {
    auto out = open("trainlog.csv");
    write_trainlog_csv(out, result.run);
  }
  save_checkpoint((dir / "reference.json").string(),
                  Checkpoint{result.reference, result.config.head,
                             result.config.schedule});
  save_checkpoint((dir / "policy.json").string(),
                  Checkpoint{result.run.final_params, result.config.head,
                             result.config.schedule});
  {
    auto out = open("eval.json");
    nlohmann::ordered_json doc;
    doc["protocol"] =
        "Best/Mean/Worst@M averaged over all " +
        std::to_string(result.config.heldout_conditions) +
        " held-out conditions; policy and reference rollouts share noise "
        "seeds and are min-max normalized jointly per condition";
    const auto stats_json = [](const RolloutStats& s) {
      return nlohmann::ordered_json{
          {"m", s.m}, {"best", s.best}, {"mean", s.mean}, {"worst", s.worst}};
    };
    doc["reference"] = stats_json(result.final_eval.reference);
    doc["policy"] = stats_json(result.final_eval.policy);
    out << doc.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// M x N/M sweep. Cells share the pretrained reference, the conditions and
// every seed, so differences isolate the curation geometry.

struct SweepGridConfig {
  std::vector<std::size_t> m_values;
  std::vector<double> ratios;  // N/M
};

struct SweepCell {
  std::size_t m = 0;
  std::size_t n = 0;
  double ratio = 0.0;
  bool diverged = false;
  int diverged_at = -1;
  std::vector<double> loss_log;
  std::vector<EvalPoint> reward_stats_log;
  EvalSummary final_eval;
};

struct SweepReport {
  std::vector<SweepCell> cells;
};

/// Validates that ratio * m is a positive integer with 2N <= M.
inline std::size_t sweep_cell_n(std::size_t m, double ratio) {
  const double exact = ratio * static_cast<double>(m);
  const auto n = static_cast<std::size_t>(exact + 0.5);
  if (n == 0 || std::abs(exact - static_cast<double>(n)) > 1e-9) {
    fail(Errc::bad_config,
         "ratio " + fmt_double(ratio) + " times M = " + std::to_string(m) +
             " is not a positive integer");
  }
  if (2 * n > m) {
    fail(Errc::ratio_too_large,
         "cell (M = " + std::to_string(m) + ", N/M = " + fmt_double(ratio) +
             ") violates 2N <= M");
  }
  return n;
}

inline SweepReport run_sweep(const ExperimentConfig& base,
                             const SweepGridConfig& grid,
                             std::ostream* log = nullptr) {
  if (grid.m_values.empty() || grid.ratios.empty()) {
    fail(Errc::bad_config, "sweep grid is empty");
  }
  // Validate the whole grid up front.
  for (std::size_t m : grid.m_values) {
    for (double ratio : grid.ratios) sweep_cell_n(m, ratio);
  }

  const ExperimentConfig shared = base.normalized();
  if (log) *log << "pretraining shared reference model...\n";
  const NetworkParams reference = pretrain_reference(shared.pretrain);

  SweepReport report;
  for (std::size_t m : grid.m_values) {
    for (double ratio : grid.ratios) {
      SweepCell cell;
      cell.m = m;
      cell.ratio = ratio;
      cell.n = sweep_cell_n(m, ratio);
      ExperimentConfig cfg = shared;
      cfg.rollouts_per_condition = m;
      cfg.selection_n = cell.n;
      if (log) *log << "sweep cell M=" << m << " N=" << cell.n << "...\n";
      try {
        const ExperimentResult r = run_experiment(cfg, reference);
        cell.loss_log = r.run.loss_log;
        cell.reward_stats_log = r.run.reward_stats_log;
        cell.final_eval = r.final_eval;
      } catch (const DivergenceError& e) {
        cell.diverged = true;
        cell.diverged_at = static_cast<int>(e.partial().loss_log.size());
        cell.loss_log = e.partial().loss_log;
        cell.reward_stats_log = e.partial().reward_stats_log;
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

/// sweep.csv: one row per logged iteration per cell; the stat columns are
/// filled on eval iterations. A diverged cell is marked in its final row.
inline void write_sweep_csv(std::ostream& out, const SweepReport& report) {
  out << "M,N,ratio,iteration,loss,best,mean,worst,diverged\n";
  for (const auto& cell : report.cells) {
    const std::string prefix = std::to_string(cell.m) + ',' +
                               std::to_string(cell.n) + ',' +
                               fmt_double(cell.ratio) + ',';
    std::size_t eval_cursor = 0;
    const auto eval_cells = [&](int iteration) -> std::string {
      if (eval_cursor < cell.reward_stats_log.size() &&
          cell.reward_stats_log[eval_cursor].iteration == iteration) {
        const RolloutStats& s = cell.reward_stats_log[eval_cursor].stats;
        ++eval_cursor;
        return fmt_double(s.best) + ',' + fmt_double(s.mean) + ',' +
               fmt_double(s.worst);
      }
      return ",,";
    };
    if (!cell.reward_stats_log.empty() &&
        cell.reward_stats_log.front().iteration == 0) {
      out << prefix << "0,," << eval_cells(0) << ",\n";
    }
    for (std::size_t i = 0; i < cell.loss_log.size(); ++i) {
      const int iteration = static_cast<int>(i) + 1;
      const bool final_row = i + 1 == cell.loss_log.size();
      out << prefix << iteration << ',' << fmt_double(cell.loss_log[i]) << ','
          << eval_cells(iteration) << ','
          << (final_row && cell.diverged ? "1" : "") << '\n';
    }
  }
}

}  // namespace dp2o
