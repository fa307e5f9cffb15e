#include "dp2o/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dp2o/config.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dp2o;

// Small enough to run in seconds, large enough to exercise every stage.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.arch.hidden = {16, 16};
  cfg.sampler_steps = 8;
  cfg.train_conditions = 6;
  cfg.heldout_conditions = 3;
  cfg.rollouts_per_condition = 6;
  cfg.selection_n = 1;
  cfg.eval_rollouts = 4;
  cfg.pretrain.max_steps = 300;
  cfg.pretrain.batch = 32;
  cfg.pretrain.eval_every = 100;
  cfg.pretrain.heldout_draws = 64;
  cfg.pretrain.mse_threshold = 10.0;  // loose; quality is not the point here
  cfg.dpo.iterations = 12;
  cfg.dpo.batch_pairs = 4;
  cfg.dpo.eval_every = 6;
  cfg.seed = 5;
  return cfg;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

TEST(Experiment, RunsAllStagesAndWritesArtifacts) {
  const auto result = run_experiment(tiny_config());
  EXPECT_EQ(result.pairs.groups.size(), 6u);
  EXPECT_EQ(result.pairs.total_pairs(), 6u);  // N=1 -> one pair per group
  EXPECT_EQ(result.run.loss_log.size(), 12u);
  ASSERT_FALSE(result.run.reward_stats_log.empty());
  EXPECT_EQ(result.run.reward_stats_log.front().iteration, 0);
  EXPECT_EQ(result.run.reward_stats_log.back().iteration, 12);

  const fs::path dir =
      fs::temp_directory_path() / "dp2o_experiment_test_artifacts";
  fs::remove_all(dir);
  write_experiment_artifacts(dir, result);
  for (const char* name :
       {"rewards.jsonl", "pairs.jsonl", "weighted_pairs.jsonl", "trainlog.csv",
        "reference.json", "policy.json", "eval.json"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const Checkpoint reference = load_checkpoint((dir / "reference.json").string());
  EXPECT_EQ(reference.params, result.reference);
  fs::remove_all(dir);
}

TEST(Experiment, DeterministicArtifacts) {
  const auto a = run_experiment(tiny_config());
  const auto b = run_experiment(tiny_config());
  EXPECT_EQ(a.run.loss_log, b.run.loss_log);
  EXPECT_EQ(a.run.final_params, b.run.final_params);

  std::ostringstream rewards_a, rewards_b, weighted_a, weighted_b;
  write_rewards_jsonl(rewards_a, a.group_rewards);
  write_rewards_jsonl(rewards_b, b.group_rewards);
  write_weighted_pairs_jsonl(weighted_a, a.weighted);
  write_weighted_pairs_jsonl(weighted_b, b.weighted);
  EXPECT_EQ(rewards_a.str(), rewards_b.str());
  EXPECT_EQ(weighted_a.str(), weighted_b.str());
}

TEST(Experiment, NestedRolloutSeeds) {
  // Rollout k is unchanged when M grows: cells of a sweep share prefixes.
  const auto cfg = tiny_config().normalized();
  const auto reference = pretrain_reference(cfg.pretrain);
  const auto conds = make_conditions(2, cfg.task, 123);
  const auto few =
      rollout_samples(reference, conds[0], 0, 4, cfg.sampler(), 777);
  const auto many =
      rollout_samples(reference, conds[0], 0, 8, cfg.sampler(), 777);
  for (std::size_t k = 0; k < few.size(); ++k) {
    EXPECT_EQ(few[k], many[k]);
  }
}

TEST(Experiment, RejectsInfeasibleSelection) {
  auto cfg = tiny_config();
  cfg.selection_n = 4;  // 2N = 8 > M = 6
  try {
    run_experiment(cfg);
    FAIL() << "expected RatioTooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ratio_too_large);
  }
}

TEST(Sweep, CellGeometry) {
  EXPECT_EQ(sweep_cell_n(8, 0.25), 2u);
  EXPECT_EQ(sweep_cell_n(32, 0.25), 8u);
  EXPECT_EQ(sweep_cell_n(16, 0.5), 8u);
  EXPECT_THROW(sweep_cell_n(8, 0.3), Error);    // non-integer N
  EXPECT_THROW(sweep_cell_n(8, 0.75), Error);   // 2N > M
  // grid {M in {8,16}} x {1/4, 1/2} is feasible throughout
  for (const std::size_t m : {8u, 16u}) {
    for (const double ratio : {0.25, 0.5}) {
      EXPECT_LE(2 * sweep_cell_n(m, ratio), m);
    }
  }
}

TEST(Sweep, DivergedCellsAreRecordedNotFatal) {
  auto cfg = tiny_config();
  cfg.dpo.learning_rate = 1e200;
  cfg.dpo.iterations = 20;
  SweepGridConfig grid;
  grid.m_values = {4, 8};
  grid.ratios = {0.25};
  const auto report = run_sweep(cfg, grid);
  ASSERT_EQ(report.cells.size(), 2u);
  for (const auto& cell : report.cells) {
    EXPECT_TRUE(cell.diverged);
    EXPECT_GE(cell.diverged_at, 0);
    EXPECT_LT(cell.loss_log.size(), 20u);
  }
  std::ostringstream csv;
  write_sweep_csv(csv, report);
  EXPECT_NE(csv.str().find(",1\n"), std::string::npos);  // diverged marker
}

TEST(Sweep, SingletonGridMatchesSingleRun) {
  auto cfg = tiny_config();
  cfg.dpo.iterations = 8;
  SweepGridConfig grid;
  grid.m_values = {cfg.rollouts_per_condition};
  grid.ratios = {static_cast<double>(cfg.selection_n) /
                 static_cast<double>(cfg.rollouts_per_condition)};
  const auto report = run_sweep(cfg, grid);
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_FALSE(report.cells[0].diverged);

  const auto single = run_experiment(cfg);
  EXPECT_EQ(report.cells[0].loss_log, single.run.loss_log);
  EXPECT_DOUBLE_EQ(report.cells[0].final_eval.policy.mean,
                   single.final_eval.policy.mean);
}

TEST(Config, ParseAndDefaults) {
  const auto run = parse_run_config(nlohmann::json::parse(R"({
    "seed": 9,
    "schedule": "diffusion",
    "head": "epsilon",
    "rollouts_per_condition": 8,
    "selection_n": 2,
    "dpo": {"beta": 123.0, "iterations": 7},
    "grid": {"m_values": [8, 16], "ratios": [0.25]}
  })"));
  EXPECT_EQ(run.experiment.seed, 9u);
  EXPECT_EQ(run.experiment.schedule, ScheduleKind::Diffusion);
  EXPECT_EQ(run.experiment.head, PredictionHead::Epsilon);
  EXPECT_EQ(run.experiment.rollouts_per_condition, 8u);
  EXPECT_DOUBLE_EQ(run.experiment.dpo.beta, 123.0);
  EXPECT_EQ(run.experiment.dpo.iterations, 7);
  ASSERT_TRUE(run.grid.has_value());
  EXPECT_EQ(run.grid->m_values.size(), 2u);

  // defaults survive
  EXPECT_EQ(run.experiment.train_conditions, 100u);
  EXPECT_DOUBLE_EQ(run.experiment.task.cond_noise, 0.25);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"sed": 1})")), Error);
  EXPECT_THROW(
      parse_run_config(nlohmann::json::parse(R"({"dpo": {"betta": 1}})")),
      Error);
}

}  // namespace
