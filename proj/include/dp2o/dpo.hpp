#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dp2o/error.hpp"
#include "dp2o/hpo.hpp"
#include "dp2o/mlp.hpp"
#include "dp2o/rng.hpp"
#include "dp2o/schedule.hpp"
#include "dp2o/stats.hpp"
#include "dp2o/toy_task.hpp"

namespace dp2o {

inline double stable_softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

enum class PairSampling { AllPerEpoch, UniformPerIteration };

inline const char* pair_sampling_name(PairSampling s) {
  return s == PairSampling::AllPerEpoch ? "all_per_epoch"
                                        : "uniform_per_iteration";
}

inline PairSampling parse_pair_sampling(std::string_view text) {
  if (text == "all_per_epoch") return PairSampling::AllPerEpoch;
  if (text == "uniform_per_iteration") return PairSampling::UniformPerIteration;
  fail(Errc::bad_config, "unknown pair sampling '" + std::string(text) +
                             "' (expected all_per_epoch|uniform_per_iteration)");
}

struct DpoConfig {
  double beta = 500.0;
  double learning_rate = 3e-4;
  std::size_t batch_pairs = 64;
  int iterations = 500;
  HpoMode hpo_mode = HpoMode::Both;
  PairSampling pair_sampling = PairSampling::UniformPerIteration;
  std::uint64_t seed = 0;
  PredictionHead head = PredictionHead::Velocity;
  ScheduleKind schedule = ScheduleKind::Flow;
  bool shared_noise = false;       // reuse eps_w as eps_l within a pair
  bool normalize_weights = true;   // weighted mean vs raw weighted sum
  int eval_every = 0;              // 0 disables the periodic reward log
};

/// A weighted pair resolved to its rollout payloads.
struct TrainingPair {
  std::vector<double> x0_winner;
  std::vector<double> x0_loser;
  std::vector<double> cond;
  double w_intra = 1.0;
  double w_inter = 1.0;
  double w_total = 1.0;

  double effective_weight(HpoMode mode) const {
    switch (mode) {
      case HpoMode::Base: return 1.0;
      case HpoMode::Intra: return w_intra;
      case HpoMode::Inter: return w_inter;
      case HpoMode::Both: return w_total;
    }
    return 1.0;
  }
};

struct PairLossResult {
  double loss = 0.0;
  double delta = 0.0;  // the bracket inside the log-sigmoid
  BackwardResult grad;
};

/// Pairwise preference loss: -log sigmoid(-beta * delta), where delta
/// contrasts the policy-vs-reference denoising error on the preferred
/// sample against the dispreferred one. The reference is evaluated
/// forward-only; its gradient is never formed.
inline PairLossResult pair_loss(const NetworkParams& policy,
                                const NetworkParams& reference,
                                std::span<const double> x0_winner,
                                std::span<const double> x0_loser,
                                std::span<const double> cond, double t,
                                std::span<const double> eps_winner,
                                std::span<const double> eps_loser, double beta,
                                const Schedule& schedule, PredictionHead head) {
  if (policy.arch != reference.arch) {
    fail(Errc::dimension_mismatch,
         "policy and reference must share one architecture");
  }
  if (x0_winner.size() != x0_loser.size()) {
    fail(Errc::dimension_mismatch, "winner/loser dimension mismatch");
  }

  const auto target_for = [&](std::span<const double> x0,
                              std::span<const double> eps) {
    return head == PredictionHead::Epsilon
               ? std::vector<double>(eps.begin(), eps.end())
               : velocity_target(x0, t, eps, schedule);
  };
  const std::vector<double> xt_w = forward_noise(x0_winner, t, eps_winner, schedule);
  const std::vector<double> xt_l = forward_noise(x0_loser, t, eps_loser, schedule);
  const std::vector<double> target_w = target_for(x0_winner, eps_winner);
  const std::vector<double> target_l = target_for(x0_loser, eps_loser);

  ForwardTrace trace_w;
  ForwardTrace trace_l;
  const std::vector<double> pred_w = predict_traced(policy, xt_w, t, cond, trace_w);
  const std::vector<double> pred_l = predict_traced(policy, xt_l, t, cond, trace_l);
  const std::vector<double> ref_w = predict(reference, xt_w, t, cond);
  const std::vector<double> ref_l = predict(reference, xt_l, t, cond);

  const auto sq_err = [](std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      sq += d * d;
    }
    return sq;
  };

  PairLossResult result;
  result.delta = (sq_err(target_w, pred_w) - sq_err(target_w, ref_w)) -
                 (sq_err(target_l, pred_l) - sq_err(target_l, ref_l));
  result.loss = stable_softplus(beta * result.delta);

  // dL/dtheta = sigmoid(beta delta) * beta * d(delta)/dtheta.
  const double scale = stable_sigmoid(beta * result.delta) * beta;
  const std::size_t dim = pred_w.size();
  std::vector<double> upstream(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    upstream[i] = scale * 2.0 * (pred_w[i] - target_w[i]);
  }
  backward_into(policy, trace_w, upstream, result.grad, /*accumulate=*/false);
  for (std::size_t i = 0; i < dim; ++i) {
    upstream[i] = -scale * 2.0 * (pred_l[i] - target_l[i]);
  }
  backward_into(policy, trace_l, upstream, result.grad, /*accumulate=*/true);
  return result;
}

struct BatchLossResult {
  double loss = 0.0;
  std::vector<double> policy_grad;
};

/// Weighted batch objective. Each slot draws its own (t, eps_w, eps_l)
/// from a substream keyed by (noise_seed, slot), so evaluation order cannot
/// change the result. Normalized form divides by the weight sum.
inline BatchLossResult hpo_batch_loss(const NetworkParams& policy,
                                      const NetworkParams& reference,
                                      std::span<const TrainingPair> batch,
                                      std::uint64_t noise_seed,
                                      const DpoConfig& config) {
  if (batch.empty()) fail(Errc::empty_batch, "batch must be non-empty");
  const Schedule schedule{config.schedule};

  BatchLossResult out;
  out.policy_grad.assign(policy.values.size(), 0.0);
  double loss_sum = 0.0;
  double weight_sum = 0.0;
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    const TrainingPair& pair = batch[slot];
    Prng rng(derive_seed(noise_seed, slot));
    const double t = rng.uniform();
    const std::vector<double> eps_w = rng.normal_vector(pair.x0_winner.size());
    const std::vector<double> eps_l =
        config.shared_noise ? eps_w : rng.normal_vector(pair.x0_loser.size());

    const PairLossResult r =
        pair_loss(policy, reference, pair.x0_winner, pair.x0_loser, pair.cond,
                  t, eps_w, eps_l, config.beta, schedule, config.head);
    const double w = pair.effective_weight(config.hpo_mode);
    loss_sum += w * r.loss;
    weight_sum += w;
    for (std::size_t i = 0; i < out.policy_grad.size(); ++i) {
      out.policy_grad[i] += w * r.grad.param_grad[i];
    }
  }
  if (config.normalize_weights) {
    out.loss = loss_sum / weight_sum;
    for (double& g : out.policy_grad) g /= weight_sum;
  } else {
    out.loss = loss_sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// First-order adaptive-moment optimizer (standard decay constants).

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double learning_rate)
      : lr_(learning_rate), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Supervised pretraining of the toy reference model.

struct PretrainConfig {
  ToyTaskConfig task;
  MlpArchitecture arch;
  ScheduleKind schedule = ScheduleKind::Flow;
  PredictionHead head = PredictionHead::Velocity;
  int max_steps = 30000;
  std::size_t batch = 128;
  double learning_rate = 3e-3;
  // Held-out denoising MSE target. The irreducible floor of the toy task
  // sits near 0.46; stopping at 0.50 puts ~96% of reference rollouts within
  // 0.1 of the data manifold while leaving the preference stage measurable
  // headroom. The draw count keeps the estimator spread well under the
  // threshold margin.
  double mse_threshold = 0.50;
  int eval_every = 1000;
  std::size_t heldout_draws = 8192;
  std::uint64_t seed = 0;
};

namespace detail {

struct DenoisingDraw {
  std::vector<double> x0;
  std::vector<double> cond;
  double t = 0.0;
  std::vector<double> eps;
};

inline DenoisingDraw make_denoising_draw(const ToyTaskConfig& task,
                                         Prng& rng) {
  DenoisingDraw d;
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  d.x0 = {std::cos(theta), std::sin(theta)};
  d.x0.resize(task.data_dim, 0.0);
  d.cond = d.x0;
  for (double& v : d.cond) v += task.cond_noise * rng.normal();
  d.t = rng.uniform();
  d.eps = rng.normal_vector(task.data_dim);
  return d;
}

inline double denoising_mse(const NetworkParams& params,
                            std::span<const DenoisingDraw> draws,
                            const Schedule& schedule, PredictionHead head) {
  double total = 0.0;
  for (const auto& d : draws) {
    const std::vector<double> xt = forward_noise(d.x0, d.t, d.eps, schedule);
    const std::vector<double> target =
        head == PredictionHead::Epsilon
            ? d.eps
            : velocity_target(d.x0, d.t, d.eps, schedule);
    const std::vector<double> pred = predict(params, xt, d.t, d.cond);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = pred[i] - target[i];
      total += r * r;
    }
  }
  return total / static_cast<double>(draws.size());
}

}  // namespace detail

/// Minimizes the standard denoising objective on the toy task until the
/// held-out MSE drops below the configured threshold. A zero step budget
/// returns the seeded initialization unchanged.
inline NetworkParams pretrain_reference(const PretrainConfig& config) {
  NetworkParams params =
      random_params(config.arch, derive_seed(config.seed, /*tag=*/0xb007));
  if (config.max_steps == 0) return params;

  const Schedule schedule{config.schedule};
  Prng heldout_rng(derive_seed(config.seed, /*tag=*/0xe7a1));
  std::vector<detail::DenoisingDraw> heldout(config.heldout_draws);
  for (auto& d : heldout) d = detail::make_denoising_draw(config.task, heldout_rng);

  AdamOptimizer adam(params.size(), config.learning_rate);
  BackwardResult scratch;
  ForwardTrace trace;
  const double inv_batch = 1.0 / static_cast<double>(config.batch);

  for (int step = 1; step <= config.max_steps; ++step) {
    Prng rng(derive_seed(config.seed, /*tag=*/0x57e9,
                         static_cast<std::uint64_t>(step)));
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto d = detail::make_denoising_draw(config.task, rng);
      const std::vector<double> xt = forward_noise(d.x0, d.t, d.eps, schedule);
      const std::vector<double> target =
          config.head == PredictionHead::Epsilon
              ? d.eps
              : velocity_target(d.x0, d.t, d.eps, schedule);
      const std::vector<double> pred =
          predict_traced(params, xt, d.t, d.cond, trace);
      std::vector<double> upstream(pred.size());
      for (std::size_t i = 0; i < pred.size(); ++i) {
        upstream[i] = 2.0 * (pred[i] - target[i]) * inv_batch;
      }
      backward_into(params, trace, upstream, scratch, /*accumulate=*/b != 0);
    }
    adam.step(params.values, scratch.param_grad);

    if (step % config.eval_every == 0 || step == config.max_steps) {
      const double mse =
          detail::denoising_mse(params, heldout, schedule, config.head);
      if (mse < config.mse_threshold) return params;
    }
  }
  fail(Errc::non_convergence,
       "held-out denoising MSE stayed >= " +
           std::to_string(config.mse_threshold) + " after " +
           std::to_string(config.max_steps) + " steps");
}

// ---------------------------------------------------------------------------
// Preference-optimization training loop.

struct EvalPoint {
  int iteration = 0;
  RolloutStats stats;
};

struct TrainRun {
  DpoConfig config;
  std::vector<double> loss_log;           // one entry per iteration
  std::vector<EvalPoint> reward_stats_log;
  NetworkParams final_params;
};

/// Thrown when the loss becomes non-finite; carries the partial run.
class DivergenceError : public Error {
 public:
  DivergenceError(TrainRun partial, int iteration)
      : Error(Errc::divergence_detected,
              "loss became non-finite at iteration " +
                  std::to_string(iteration)),
        partial_(std::make_shared<TrainRun>(std::move(partial))) {}

  const TrainRun& partial() const { return *partial_; }

 private:
  std::shared_ptr<TrainRun> partial_;
};

using EvalHook = std::function<RolloutStats(const NetworkParams&, int)>;

/// Runs the weighted preference objective. The policy starts as an exact
/// copy of the frozen reference; all stochasticity is derived from
/// config.seed, so identical configs reproduce identical logs.
inline TrainRun train(const std::vector<TrainingPair>& dataset,
                      const NetworkParams& reference, const DpoConfig& config,
                      const EvalHook& eval = {}) {
  if (dataset.empty()) fail(Errc::empty_batch, "training dataset is empty");
  if (config.beta <= 0.0) fail(Errc::bad_config, "beta must be positive");
  if (config.iterations < 0) fail(Errc::bad_config, "iterations must be >= 0");
  if (config.batch_pairs == 0) fail(Errc::bad_config, "batch_pairs must be >= 1");

  TrainRun run;
  run.config = config;
  run.final_params = reference;
  NetworkParams& policy = run.final_params;

  AdamOptimizer adam(policy.size(), config.learning_rate);
  Prng pick_rng(derive_seed(config.seed, /*tag=*/0x91c4));

  // Epoch-shuffled visit order for all_per_epoch sampling.
  std::vector<std::size_t> epoch_order(dataset.size());
  std::iota(epoch_order.begin(), epoch_order.end(), std::size_t{0});
  std::size_t epoch_cursor = epoch_order.size();  // force shuffle on first use
  std::uint64_t epoch_counter = 0;

  const auto bounded = [](Prng& rng, std::size_t n) {
    // Rejection sampling keeps the pick exactly uniform.
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t word;
    do {
      word = rng.next_u64();
    } while (word >= limit);
    return static_cast<std::size_t>(word % n);
  };

  std::vector<TrainingPair> batch;
  const auto record_eval = [&](int iteration) {
    if (eval) run.reward_stats_log.push_back({iteration, eval(policy, iteration)});
  };

  if (config.eval_every > 0) record_eval(0);

  for (int iteration = 0; iteration < config.iterations; ++iteration) {
    batch.clear();
    if (config.pair_sampling == PairSampling::UniformPerIteration) {
      for (std::size_t b = 0; b < config.batch_pairs; ++b) {
        batch.push_back(dataset[bounded(pick_rng, dataset.size())]);
      }
    } else {
      for (std::size_t b = 0; b < config.batch_pairs; ++b) {
        if (epoch_cursor == epoch_order.size()) {
          Prng shuffle_rng(
              derive_seed(config.seed, /*tag=*/0x5f00, epoch_counter++));
          for (std::size_t i = epoch_order.size(); i > 1; --i) {
            std::swap(epoch_order[i - 1], epoch_order[bounded(shuffle_rng, i)]);
          }
          epoch_cursor = 0;
        }
        batch.push_back(dataset[epoch_order[epoch_cursor++]]);
      }
    }

    const std::uint64_t noise_seed =
        derive_seed(config.seed, /*tag=*/0xd1ce, static_cast<std::uint64_t>(iteration));
    const BatchLossResult result =
        hpo_batch_loss(policy, reference, batch, noise_seed, config);
    if (!std::isfinite(result.loss)) {
      throw DivergenceError(std::move(run), iteration);
    }
    run.loss_log.push_back(result.loss);
    adam.step(policy.values, result.policy_grad);

    const bool last = iteration + 1 == config.iterations;
    if (config.eval_every > 0 &&
        ((iteration + 1) % config.eval_every == 0 || last)) {
      record_eval(iteration + 1);
    }
  }
  return run;
}

}  // namespace dp2o
