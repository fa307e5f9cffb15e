// Command-line front end for the dp2o toy pipeline. Each subcommand reads
// the previous stage's artifact from disk, so externally produced score
// tables can be spliced in at any point.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dp2o/dp2o.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) dp2o::fail(dp2o::Errc::io_error, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    dp2o::fail(dp2o::Errc::io_error, "cannot write '" + path.string() + "'");
  }
  return out;
}

dp2o::TableFormat table_format_for(const std::string& path,
                                   const std::string& explicit_format) {
  if (explicit_format == "csv") return dp2o::TableFormat::Csv;
  if (explicit_format == "jsonl") return dp2o::TableFormat::Jsonl;
  if (!explicit_format.empty()) {
    dp2o::fail(dp2o::Errc::bad_config,
               "unknown --format '" + explicit_format + "'");
  }
  return fs::path(path).extension() == ".jsonl" ? dp2o::TableFormat::Jsonl
                                                : dp2o::TableFormat::Csv;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& scores_path, const std::string& manifest_path,
               const std::string& out_path, const std::string& format) {
  const dp2o::MetricSet metrics =
      dp2o::MetricSet::from_manifest_json(read_file(manifest_path));
  metrics.require_reward_capable();

  std::ifstream scores(scores_path, std::ios::binary);
  if (!scores) {
    dp2o::fail(dp2o::Errc::io_error, "cannot open '" + scores_path + "'");
  }
  const dp2o::ScoreTable table = dp2o::parse_score_table(
      scores, table_format_for(scores_path, format), metrics);
  const std::vector<dp2o::CandidateGroup> groups = dp2o::group_candidates(table);

  std::vector<dp2o::GroupRewards> rewards;
  rewards.reserve(groups.size());
  for (const auto& group : groups) {
    dp2o::RewardVector r = dp2o::compute_group_rewards(group, metrics);
    double lo = r.rewards[0];
    double hi = r.rewards[0];
    for (double v : r.rewards) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::cout << "group=" << group.group_id << " M=" << group.size()
              << " reward_range=[" << dp2o::fmt_double(lo) << ","
              << dp2o::fmt_double(hi) << "]\n";
    rewards.push_back(
        dp2o::GroupRewards{group.group_id, group.candidate_ids, std::move(r)});
  }
  auto out = open_out(out_path);
  dp2o::write_rewards_jsonl(out, rewards);
  std::cout << "wrote " << out_path << " (" << table.records.size()
            << " records, " << groups.size() << " groups)\n";
  return 0;
}

int cmd_curate(const std::string& rewards_path, std::size_t n, std::size_t m,
               bool strict_m, const std::string& hpo_mode,
               const std::string& pairs_path, const std::string& weighted_path) {
  std::ifstream in(rewards_path, std::ios::binary);
  if (!in) {
    dp2o::fail(dp2o::Errc::io_error, "cannot open '" + rewards_path + "'");
  }
  const std::vector<dp2o::GroupRewards> groups = dp2o::read_rewards_jsonl(in);
  if (groups.empty()) {
    dp2o::fail(dp2o::Errc::empty_corpus, "no groups in " + rewards_path);
  }

  const dp2o::CurationConfig config{n, m, strict_m};
  dp2o::PairDataset dataset;
  for (const auto& group : groups) {
    dataset.groups.push_back(
        dp2o::curate_group(group.candidate_ids, group.rewards, config));
  }
  const dp2o::WeightedPairDataset weighted =
      dp2o::attach_weights(dataset, dp2o::parse_hpo_mode(hpo_mode));

  {
    auto out = open_out(pairs_path);
    dp2o::write_pairs_jsonl(out, dataset);
  }
  {
    auto out = open_out(weighted_path);
    dp2o::write_weighted_pairs_jsonl(out, weighted);
  }
  std::cout << "groups=" << dataset.groups.size()
            << " pairs=" << dataset.total_pairs() << " hpo_mode=" << hpo_mode
            << "\n";
  std::cout << "wrote " << pairs_path << " and " << weighted_path << "\n";
  return 0;
}

void print_eval(const dp2o::EvalSummary& eval) {
  std::cout << "held-out stats averaged over all held-out conditions "
               "(shared seeds, pooled per-condition normalization)\n";
  const auto line = [](const char* who, const dp2o::RolloutStats& s) {
    std::cout << who << " best@" << s.m << "=" << dp2o::fmt_double(s.best)
              << " mean@" << s.m << "=" << dp2o::fmt_double(s.mean)
              << " worst@" << s.m << "=" << dp2o::fmt_double(s.worst) << "\n";
  };
  line("reference:", eval.reference);
  line("policy:   ", eval.policy);
}

// Command-line overrides applied on top of the JSON config.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> schedule;
  std::optional<int> steps;
  std::optional<std::string> hpo_mode;
  std::optional<double> beta;
  std::optional<int> iterations;
  bool shared_noise = false;

  void apply(dp2o::ExperimentConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (schedule) {
      cfg.schedule = dp2o::parse_schedule_kind(*schedule);
      cfg.head = cfg.schedule == dp2o::ScheduleKind::Flow
                     ? dp2o::PredictionHead::Velocity
                     : dp2o::PredictionHead::Epsilon;
    }
    if (steps) cfg.sampler_steps = *steps;
    if (hpo_mode) cfg.hpo_mode = dp2o::parse_hpo_mode(*hpo_mode);
    if (beta) cfg.dpo.beta = *beta;
    if (iterations) cfg.dpo.iterations = *iterations;
    if (shared_noise) cfg.dpo.shared_noise = true;
  }
};

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const ConfigOverrides& overrides) {
  dp2o::RunConfig run_config = dp2o::load_run_config(config_path);
  overrides.apply(run_config.experiment);
  std::optional<dp2o::NetworkParams> reference;
  if (run_config.reference_checkpoint) {
    reference =
        dp2o::load_checkpoint(*run_config.reference_checkpoint).params;
  }
  try {
    const dp2o::ExperimentResult result =
        dp2o::run_experiment(run_config.experiment, reference, &std::cout);
    dp2o::write_experiment_artifacts(out_dir, result);
    print_eval(result.final_eval);
    std::cout << "wrote artifacts to " << out_dir << "\n";
  } catch (const dp2o::DivergenceError& e) {
    fs::create_directories(out_dir);
    auto out = open_out(fs::path(out_dir) / "trainlog.csv");
    dp2o::write_trainlog_csv(out, e.partial());
    std::cerr << "error: " << e.what() << " (partial trainlog written)\n";
    return kExitDivergence;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const ConfigOverrides& overrides) {
  dp2o::RunConfig run_config = dp2o::load_run_config(config_path);
  overrides.apply(run_config.experiment);
  if (!run_config.grid) {
    dp2o::fail(dp2o::Errc::bad_config,
               "sweep config needs a \"grid\" section");
  }
  const dp2o::SweepReport report =
      dp2o::run_sweep(run_config.experiment, *run_config.grid, &std::cout);
  {
    auto out = open_out(fs::path(out_dir) / "sweep.csv");
    dp2o::write_sweep_csv(out, report);
  }
  bool any_diverged = false;
  for (const auto& cell : report.cells) {
    std::cout << "cell M=" << cell.m << " N=" << cell.n << " ratio="
              << dp2o::fmt_double(cell.ratio);
    if (cell.diverged) {
      any_diverged = true;
      std::cout << " DIVERGED at iteration " << cell.diverged_at << "\n";
    } else {
      std::cout << " final mean@" << cell.final_eval.policy.m << "="
                << dp2o::fmt_double(cell.final_eval.policy.mean) << "\n";
    }
  }
  std::cout << "wrote " << (fs::path(out_dir) / "sweep.csv").string() << "\n";
  return any_diverged ? kExitDivergence : 0;
}

// Plain-text plus CSV summary of a trainlog or sweep artifact.
int cmd_report(const std::string& trainlog_path, const std::string& sweep_path,
               const std::string& out_path) {
  std::ostringstream summary_csv;
  if (!trainlog_path.empty()) {
    std::ifstream in(trainlog_path);
    if (!in) {
      dp2o::fail(dp2o::Errc::io_error, "cannot open '" + trainlog_path + "'");
    }
    std::string line;
    std::getline(in, line);  // header
    std::string last_loss;
    std::string last_stats;
    std::size_t iterations = 0;
    summary_csv << "iteration,loss,best,mean,worst\n";
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string iter, loss, best, mean, worst;
      std::getline(row, iter, ',');
      std::getline(row, loss, ',');
      std::getline(row, best, ',');
      std::getline(row, mean, ',');
      std::getline(row, worst, ',');
      if (!loss.empty()) {
        iterations = std::stoul(iter);
        last_loss = loss;
      }
      if (!mean.empty()) {
        last_stats = "best=" + best + " mean=" + mean + " worst=" + worst;
        summary_csv << iter << ',' << loss << ',' << best << ',' << mean << ','
                    << worst << '\n';
      }
    }
    std::cout << "trainlog: " << iterations << " iterations, final loss "
              << last_loss << "\n";
    if (!last_stats.empty()) std::cout << "final held-out " << last_stats << "\n";
  }
  if (!sweep_path.empty()) {
    std::ifstream in(sweep_path);
    if (!in) {
      dp2o::fail(dp2o::Errc::io_error, "cannot open '" + sweep_path + "'");
    }
    std::string line;
    std::getline(in, line);  // header
    summary_csv << "M,N,ratio,final_best,final_mean,final_worst,diverged\n";
    std::string cell_key;
    std::string cell_stats_csv;
    std::string cell_stats_text;
    std::string cell_diverged;
    const auto flush_cell = [&]() {
      if (cell_key.empty()) return;
      summary_csv << cell_key << ',' << cell_stats_csv << ',' << cell_diverged
                  << '\n';
      std::cout << "cell " << cell_key << ": " << cell_stats_text
                << (cell_diverged == "1" ? " [diverged]" : "") << "\n";
    };
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string m, n, ratio, iter, loss, best, mean, worst, diverged;
      std::getline(row, m, ',');
      std::getline(row, n, ',');
      std::getline(row, ratio, ',');
      std::getline(row, iter, ',');
      std::getline(row, loss, ',');
      std::getline(row, best, ',');
      std::getline(row, mean, ',');
      std::getline(row, worst, ',');
      std::getline(row, diverged, ',');
      const std::string key = m + ',' + n + ',' + ratio;
      if (key != cell_key) {
        flush_cell();
        cell_key = key;
        cell_stats_csv = ",,";
        cell_stats_text = "no eval points";
        cell_diverged = "";
      }
      if (!mean.empty()) {
        cell_stats_csv = best + ',' + mean + ',' + worst;
        cell_stats_text = "best=" + best + " mean=" + mean + " worst=" + worst;
      }
      if (diverged == "1") cell_diverged = "1";
    }
    flush_cell();
  }
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    out << summary_csv.str();
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: fast invariant checks over the numeric core.

int cmd_selftest() {
  int failures = 0;
  const auto check = [&](bool ok, const std::string& name) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  {
    bool ok = true;
    for (const auto kind : {dp2o::ScheduleKind::Diffusion, dp2o::ScheduleKind::Flow}) {
      const dp2o::Schedule schedule{kind};
      for (int i = 0; i <= 1000; ++i) {
        const double t = static_cast<double>(i) / 1000.0;
        const auto c = schedule.coeffs(t);
        const double constraint = kind == dp2o::ScheduleKind::Diffusion
                                      ? c.alpha * c.alpha + c.sigma * c.sigma
                                      : c.alpha + c.sigma;
        ok &= std::abs(constraint - 1.0) < 1e-12;
      }
    }
    check(ok, "schedule constraints hold to 1e-12 on a 1001-point grid");
  }
  {
    dp2o::Prng rng(7);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t m = 2 + static_cast<std::size_t>(rng.uniform() * 7);
      std::vector<dp2o::MetricSpec> specs;
      const std::size_t n_fr = 1 + static_cast<std::size_t>(rng.uniform() * 3);
      const std::size_t n_nr = 1 + static_cast<std::size_t>(rng.uniform() * 3);
      for (std::size_t i = 0; i < n_fr; ++i) {
        specs.push_back({"fr" + std::to_string(i),
                         dp2o::MetricFamily::FullReference,
                         dp2o::MetricDirection::HigherBetter});
      }
      for (std::size_t i = 0; i < n_nr; ++i) {
        specs.push_back({"nr" + std::to_string(i),
                         dp2o::MetricFamily::NoReference,
                         dp2o::MetricDirection::HigherBetter});
      }
      const dp2o::MetricSet metrics(std::move(specs));
      dp2o::CandidateGroup group;
      group.group_id = "g";
      group.n_metrics = metrics.size();
      for (std::size_t c = 0; c < m; ++c) {
        group.candidate_ids.push_back("c" + std::to_string(c));
        for (std::size_t k = 0; k < metrics.size(); ++k) {
          group.raw_scores.push_back(rng.normal());
        }
      }
      const auto rewards = dp2o::compute_group_rewards(group, metrics);
      const auto normalized =
          dp2o::minmax_normalize(dp2o::align_direction(group, metrics));
      for (std::size_t c = 0; c < m; ++c) {
        double fr = 0.0;
        double nr = 0.0;
        for (std::size_t k = 0; k < metrics.size(); ++k) {
          if (metrics.at(k).family == dp2o::MetricFamily::FullReference) {
            fr += normalized.at(c, k);
          } else {
            nr += normalized.at(c, k);
          }
        }
        const double expected = 0.5 / static_cast<double>(n_fr) * fr +
                                0.5 / static_cast<double>(n_nr) * nr;
        ok &= std::abs(rewards.rewards[c] - expected) < 1e-12;
      }
    }
    check(ok, "hybrid reward matches the double-loop oracle to 1e-12");
  }
  {
    dp2o::Prng rng(11);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n_groups = 1 + static_cast<std::size_t>(rng.uniform() * 6);
      dp2o::PairDataset dataset;
      for (std::size_t g = 0; g < n_groups; ++g) {
        dp2o::GroupPairs group;
        group.group_id = "g" + std::to_string(g);
        dp2o::RewardVector rewards;
        rewards.group_id = group.group_id;
        const std::size_t m = 4;
        for (std::size_t c = 0; c < m; ++c) {
          group.candidate_ids.push_back("c" + std::to_string(c));
          rewards.rewards.push_back(rng.uniform());
        }
        group.rewards = rewards;
        group.pairs = dp2o::curate_group(group.candidate_ids, rewards,
                                         dp2o::CurationConfig{1, 0, false})
                          .pairs;
        dataset.groups.push_back(std::move(group));
      }
      const auto weighted = dp2o::attach_weights(dataset, dp2o::HpoMode::Both);
      double inter_sum = 0.0;
      for (const auto& g : weighted.groups) {
        double intra_sum = 0.0;
        for (const auto& p : g.pairs) intra_sum += p.w_intra;
        ok &= std::abs(intra_sum / static_cast<double>(g.pairs.size()) - 1.0) <
              1e-12;
        inter_sum += g.pairs.front().w_inter;
      }
      ok &= std::abs(inter_sum / static_cast<double>(n_groups) - 1.0) < 1e-12;
    }
    check(ok, "HPO weights normalize to mean 1 per level");
  }
  {
    dp2o::MlpArchitecture arch;
    arch.hidden = {8};
    const auto params = dp2o::random_params(arch, 3);
    dp2o::Prng rng(5);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      const auto x0_w = rng.normal_vector(2);
      const auto x0_l = rng.normal_vector(2);
      const auto cond = rng.normal_vector(2);
      const auto eps_w = rng.normal_vector(2);
      const auto eps_l = rng.normal_vector(2);
      const double t = rng.uniform();
      for (const auto kind : {dp2o::ScheduleKind::Diffusion, dp2o::ScheduleKind::Flow}) {
        const auto head = kind == dp2o::ScheduleKind::Diffusion
                              ? dp2o::PredictionHead::Epsilon
                              : dp2o::PredictionHead::Velocity;
        const auto result = dp2o::pair_loss(params, params, x0_w, x0_l, cond, t,
                                            eps_w, eps_l, 500.0,
                                            dp2o::Schedule{kind}, head);
        ok &= std::abs(result.loss - std::numbers::ln2) < 1e-6;
      }
    }
    check(ok, "identity-policy pair loss equals log 2");
  }
  {
    dp2o::MlpArchitecture arch;
    arch.hidden = {8};
    const auto params = dp2o::random_params(arch, 9);
    const std::vector<double> cond = {0.3, -0.2};
    const dp2o::SamplerConfig sampler{dp2o::ScheduleKind::Flow,
                                      dp2o::PredictionHead::Velocity, 8};
    const auto a = dp2o::sample_rollout(params, cond, 42, sampler);
    const auto b = dp2o::sample_rollout(params, cond, 42, sampler);
    check(a.sample == b.sample, "rollouts are reproducible for a fixed seed");
  }

  if (failures == 0) {
    std::cout << "selftest: all checks passed\n";
    return 0;
  }
  std::cout << "selftest: " << failures << " check(s) failed\n";
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dp2o preference-optimization pipeline (toy scale)"};
  app.require_subcommand(1);

  std::string scores_path, manifest_path, out_path, format;
  auto* ingest = app.add_subcommand(
      "ingest", "Validate a score table and write rewards.jsonl");
  ingest->add_option("--scores", scores_path, "score table (CSV or JSONL)")
      ->required();
  ingest->add_option("--manifest", manifest_path, "metric manifest JSON")
      ->required();
  ingest->add_option("--out", out_path, "output rewards.jsonl")
      ->default_val("rewards.jsonl");
  ingest->add_option("--format", format, "csv|jsonl (default: by extension)");

  std::string rewards_path = "rewards.jsonl";
  std::string pairs_path = "pairs.jsonl";
  std::string weighted_path = "weighted_pairs.jsonl";
  std::string hpo_mode = "both";
  std::size_t n_select = 1;
  std::size_t m_expected = 0;
  bool strict_m = false;
  auto* curate = app.add_subcommand(
      "curate", "Build N^2 preference pairs per group and attach HPO weights");
  curate->add_option("--rewards", rewards_path, "rewards.jsonl from ingest");
  curate->add_option("--n", n_select, "top/bottom selection size N")->required();
  curate->add_option("--m", m_expected, "expected group size M");
  curate->add_flag("--strict-m", strict_m, "require every group to have exactly M");
  curate->add_option("--hpo-mode", hpo_mode, "base|intra|inter|both");
  curate->add_option("--pairs-out", pairs_path, "output pairs.jsonl");
  curate->add_option("--weighted-out", weighted_path,
                     "output weighted_pairs.jsonl");

  std::string config_path;
  std::string out_dir = "run";
  ConfigOverrides overrides;
  auto* train = app.add_subcommand(
      "train", "Run the end-to-end toy experiment from a JSON config");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out-dir", out_dir, "artifact directory");
  train->add_option("--seed", overrides.seed, "override master seed");
  train->add_option("--schedule", overrides.schedule,
                    "override schedule: diffusion|flow");
  train->add_option("--steps", overrides.steps, "override sampler steps");
  train->add_option("--hpo-mode", overrides.hpo_mode,
                    "override weighting arm: base|intra|inter|both");
  train->add_option("--beta", overrides.beta, "override preference strength");
  train->add_option("--iterations", overrides.iterations,
                    "override iteration count");
  train->add_flag("--shared-noise", overrides.shared_noise,
                  "share one noise draw within each pair");

  std::string sweep_config_path;
  std::string sweep_out_dir = "sweep";
  auto* sweep = app.add_subcommand(
      "sweep", "Train one cell per (M, N/M) grid point with shared seeds");
  sweep->add_option("--config", sweep_config_path, "sweep config JSON")
      ->required();
  sweep->add_option("--out-dir", sweep_out_dir, "artifact directory");
  sweep->add_option("--seed", overrides.seed, "override master seed");
  sweep->add_option("--schedule", overrides.schedule,
                    "override schedule: diffusion|flow");
  sweep->add_option("--steps", overrides.steps, "override sampler steps");
  sweep->add_option("--hpo-mode", overrides.hpo_mode,
                    "override weighting arm: base|intra|inter|both");

  std::string report_trainlog, report_sweep, report_out;
  auto* report = app.add_subcommand(
      "report", "Summarize trainlog.csv / sweep.csv artifacts");
  report->add_option("--trainlog", report_trainlog, "trainlog.csv path");
  report->add_option("--sweep", report_sweep, "sweep.csv path");
  report->add_option("--out", report_out, "summary CSV output path");

  auto* selftest =
      app.add_subcommand("selftest", "Run fast built-in invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      return cmd_ingest(scores_path, manifest_path, out_path, format);
    }
    if (curate->parsed()) {
      return cmd_curate(rewards_path, n_select, m_expected, strict_m, hpo_mode,
                        pairs_path, weighted_path);
    }
    if (train->parsed()) return cmd_train(config_path, out_dir, overrides);
    if (sweep->parsed()) {
      return cmd_sweep(sweep_config_path, sweep_out_dir, overrides);
    }
    if (report->parsed()) {
      if (report_trainlog.empty() && report_sweep.empty()) {
        dp2o::fail(dp2o::Errc::bad_config,
                   "report needs --trainlog and/or --sweep");
      }
      return cmd_report(report_trainlog, report_sweep, report_out);
    }
    if (selftest->parsed()) return cmd_selftest();
  } catch (const dp2o::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == dp2o::Errc::divergence_detected ? kExitDivergence
                                                       : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
