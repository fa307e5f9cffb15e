#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dp2o/error.hpp"
#include "dp2o/experiment.hpp"

namespace dp2o {

// JSON run configuration. Every field is optional and falls back to the
// compiled default; unknown keys are rejected so that typos fail fast.

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) fail(Errc::bad_config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

struct RunConfig {
  ExperimentConfig experiment;
  std::optional<std::string> reference_checkpoint;
  std::optional<SweepGridConfig> grid;
};

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(Errc::bad_config, "config must be a JSON object");
  detail::reject_unknown_keys(
      doc,
      {"seed", "schedule", "head", "sampler_steps", "task", "arch",
       "train_conditions", "heldout_conditions", "rollouts_per_condition",
       "selection_n", "hpo_mode", "eval_rollouts", "pretrain", "dpo",
       "reference_checkpoint", "grid"},
      "config");

  RunConfig run;
  ExperimentConfig& cfg = run.experiment;
  detail::read_field(doc, "seed", cfg.seed);
  if (doc.contains("schedule")) {
    cfg.schedule = parse_schedule_kind(doc.at("schedule").get<std::string>());
  }
  if (doc.contains("head")) {
    cfg.head = parse_head(doc.at("head").get<std::string>());
  }
  detail::read_field(doc, "sampler_steps", cfg.sampler_steps);
  detail::read_field(doc, "train_conditions", cfg.train_conditions);
  detail::read_field(doc, "heldout_conditions", cfg.heldout_conditions);
  detail::read_field(doc, "rollouts_per_condition", cfg.rollouts_per_condition);
  detail::read_field(doc, "selection_n", cfg.selection_n);
  detail::read_field(doc, "eval_rollouts", cfg.eval_rollouts);
  if (doc.contains("hpo_mode")) {
    cfg.hpo_mode = parse_hpo_mode(doc.at("hpo_mode").get<std::string>());
  }

  if (doc.contains("task")) {
    const auto& task = doc.at("task");
    detail::reject_unknown_keys(task, {"cond_noise", "data_dim"}, "task");
    detail::read_field(task, "cond_noise", cfg.task.cond_noise);
    detail::read_field(task, "data_dim", cfg.task.data_dim);
  }
  cfg.arch.data_dim = cfg.task.data_dim;
  cfg.arch.cond_dim = cfg.task.data_dim;
  if (doc.contains("arch")) {
    const auto& arch = doc.at("arch");
    detail::reject_unknown_keys(arch, {"hidden"}, "arch");
    detail::read_field(arch, "hidden", cfg.arch.hidden);
  }

  if (doc.contains("pretrain")) {
    const auto& pre = doc.at("pretrain");
    detail::reject_unknown_keys(pre,
                                {"max_steps", "batch", "learning_rate",
                                 "mse_threshold", "eval_every",
                                 "heldout_draws"},
                                "pretrain");
    detail::read_field(pre, "max_steps", cfg.pretrain.max_steps);
    detail::read_field(pre, "batch", cfg.pretrain.batch);
    detail::read_field(pre, "learning_rate", cfg.pretrain.learning_rate);
    detail::read_field(pre, "mse_threshold", cfg.pretrain.mse_threshold);
    detail::read_field(pre, "eval_every", cfg.pretrain.eval_every);
    detail::read_field(pre, "heldout_draws", cfg.pretrain.heldout_draws);
  }

  if (doc.contains("dpo")) {
    const auto& dpo = doc.at("dpo");
    detail::reject_unknown_keys(
        dpo,
        {"beta", "learning_rate", "batch_pairs", "iterations", "pair_sampling",
         "shared_noise", "normalize_weights", "eval_every"},
        "dpo");
    detail::read_field(dpo, "beta", cfg.dpo.beta);
    detail::read_field(dpo, "learning_rate", cfg.dpo.learning_rate);
    detail::read_field(dpo, "batch_pairs", cfg.dpo.batch_pairs);
    detail::read_field(dpo, "iterations", cfg.dpo.iterations);
    if (dpo.contains("pair_sampling")) {
      cfg.dpo.pair_sampling =
          parse_pair_sampling(dpo.at("pair_sampling").get<std::string>());
    }
    detail::read_field(dpo, "shared_noise", cfg.dpo.shared_noise);
    detail::read_field(dpo, "normalize_weights", cfg.dpo.normalize_weights);
    detail::read_field(dpo, "eval_every", cfg.dpo.eval_every);
  }

  if (doc.contains("reference_checkpoint")) {
    run.reference_checkpoint =
        doc.at("reference_checkpoint").get<std::string>();
  }
  if (doc.contains("grid")) {
    const auto& grid = doc.at("grid");
    detail::reject_unknown_keys(grid, {"m_values", "ratios"}, "grid");
    SweepGridConfig g;
    detail::read_field(grid, "m_values", g.m_values);
    detail::read_field(grid, "ratios", g.ratios);
    run.grid = std::move(g);
  }
  return run;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true,
                                /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

}  // namespace dp2o
