#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dp2o/error.hpp"
#include "dp2o/mlp.hpp"
#include "dp2o/rng.hpp"
#include "dp2o/schedule.hpp"

namespace dp2o {

struct SamplerConfig {
  ScheduleKind schedule = ScheduleKind::Flow;
  PredictionHead head = PredictionHead::Velocity;
  int steps = 16;
};

struct Rollout {
  std::vector<double> cond;
  std::uint64_t seed = 0;
  std::vector<double> sample;
  int trajectory_len = 0;
};

namespace detail {

// Flow with a velocity head: explicit Euler on the learned field from
// t = 1 down to 0.
inline std::vector<double> sample_flow_euler(const NetworkParams& params,
                                             std::span<const double> cond,
                                             std::vector<double> x,
                                             int steps) {
  const double dt = 1.0 / static_cast<double>(steps);
  for (int k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) * dt;
    const std::vector<double> v = predict(params, x, t, cond);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dt * v[i];
  }
  return x;
}

// Deterministic DDIM-style updates for every other schedule/head pairing.
// The grid is shifted off t = 1, where alpha vanishes and recovering the
// clean estimate from an epsilon prediction divides by ~0. Each step
// reconstructs (x0_hat, eps_hat) from the prediction at t_hi and re-noises
// to t_lo; the last step lands exactly on t = 0.
inline std::vector<double> sample_ddim(const NetworkParams& params,
                                       std::span<const double> cond,
                                       std::vector<double> x, int steps,
                                       const Schedule& schedule,
                                       PredictionHead head) {
  const std::size_t dim = x.size();
  std::vector<double> x0_hat(dim);
  std::vector<double> eps_hat(dim);
  for (int k = steps; k >= 1; --k) {
    const double t_hi =
        static_cast<double>(k) / static_cast<double>(steps + 1);
    const double t_lo =
        static_cast<double>(k - 1) / static_cast<double>(steps + 1);
    const Coeffs hi = schedule.coeffs(t_hi);
    const Coeffs lo = schedule.coeffs(t_lo);
    const std::vector<double> pred = predict(params, x, t_hi, cond);

    if (head == PredictionHead::Epsilon) {
      for (std::size_t i = 0; i < dim; ++i) {
        eps_hat[i] = pred[i];
        x0_hat[i] = (x[i] - hi.sigma * pred[i]) / hi.alpha;
      }
    } else {
      // Invert [x; v] = [[a, s], [da, ds]] [x0; eps] at t_hi. The
      // determinant is pi/2 for the cosine schedule and 1 for linear flow.
      const double det = hi.alpha * hi.dsigma - hi.sigma * hi.dalpha;
      for (std::size_t i = 0; i < dim; ++i) {
        x0_hat[i] = (hi.dsigma * x[i] - hi.sigma * pred[i]) / det;
        eps_hat[i] = (hi.alpha * pred[i] - hi.dalpha * x[i]) / det;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      x[i] = lo.alpha * x0_hat[i] + lo.sigma * eps_hat[i];
    }
  }
  return x;
}

}  // namespace detail

/// One stochastic generation: seeded initial noise followed by a
/// deterministic reverse pass. Identical (params, cond, seed, config)
/// always yields a bitwise-identical sample.
inline Rollout sample_rollout(const NetworkParams& params,
                              std::span<const double> cond, std::uint64_t seed,
                              const SamplerConfig& config) {
  if (config.steps < 1) fail(Errc::bad_config, "sampler needs steps >= 1");
  Prng rng(derive_seed(seed, /*tag=*/0x5eedull));
  std::vector<double> x = rng.normal_vector(params.arch.data_dim);

  Rollout rollout;
  rollout.cond.assign(cond.begin(), cond.end());
  rollout.seed = seed;
  rollout.trajectory_len = config.steps;
  if (config.schedule == ScheduleKind::Flow &&
      config.head == PredictionHead::Velocity) {
    rollout.sample =
        detail::sample_flow_euler(params, cond, std::move(x), config.steps);
  } else {
    const Schedule schedule{config.schedule};
    rollout.sample = detail::sample_ddim(params, cond, std::move(x),
                                         config.steps, schedule, config.head);
  }
  return rollout;
}

}  // namespace dp2o
