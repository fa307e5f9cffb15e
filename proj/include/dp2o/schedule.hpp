#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dp2o/error.hpp"

namespace dp2o {

enum class ScheduleKind { Diffusion, Flow };

inline const char* schedule_kind_name(ScheduleKind kind) {
  return kind == ScheduleKind::Diffusion ? "diffusion" : "flow";
}

inline ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "diffusion") return ScheduleKind::Diffusion;
  if (text == "flow") return ScheduleKind::Flow;
  fail(Errc::bad_config, "unknown schedule '" + std::string(text) +
                             "' (expected diffusion|flow)");
}

struct Coeffs {
  double alpha = 0.0;
  double sigma = 0.0;
  double dalpha = 0.0;
  double dsigma = 0.0;
};

/// Interpolation x_t = alpha_t x0 + sigma_t eps over continuous t in [0,1].
/// Diffusion uses alpha = cos(pi t / 2) so alpha^2 + sigma^2 = 1; flow uses
/// alpha = 1 - t so alpha + sigma = 1. t = 0 is the data endpoint.
struct Schedule {
  ScheduleKind kind = ScheduleKind::Flow;

  Coeffs coeffs(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
      fail(Errc::out_of_range_t,
           "t = " + std::to_string(t) + " outside [0,1]");
    }
    Coeffs c;
    if (kind == ScheduleKind::Diffusion) {
      const double half_pi = std::numbers::pi / 2.0;
      c.alpha = std::cos(half_pi * t);
      c.sigma = std::sin(half_pi * t);
      c.dalpha = -half_pi * std::sin(half_pi * t);
      c.dsigma = half_pi * std::cos(half_pi * t);
    } else {
      c.alpha = 1.0 - t;
      c.sigma = t;
      c.dalpha = -1.0;
      c.dsigma = 1.0;
    }
    return c;
  }
};

/// x_t = alpha_t x0 + sigma_t eps.
inline std::vector<double> forward_noise(std::span<const double> x0, double t,
                                         std::span<const double> eps,
                                         const Schedule& schedule) {
  if (x0.size() != eps.size()) {
    fail(Errc::dimension_mismatch,
         "x0 has dim " + std::to_string(x0.size()) + ", eps has dim " +
             std::to_string(eps.size()));
  }
  const Coeffs c = schedule.coeffs(t);
  std::vector<double> xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    xt[i] = c.alpha * x0[i] + c.sigma * eps[i];
  }
  return xt;
}

/// Regression target for the given head: the injected noise itself, or the
/// interpolation velocity d(x_t)/dt = dalpha x0 + dsigma eps.
inline std::vector<double> velocity_target(std::span<const double> x0, double t,
                                           std::span<const double> eps,
                                           const Schedule& schedule) {
  if (x0.size() != eps.size()) {
    fail(Errc::dimension_mismatch,
         "x0 has dim " + std::to_string(x0.size()) + ", eps has dim " +
             std::to_string(eps.size()));
  }
  const Coeffs c = schedule.coeffs(t);
  std::vector<double> v(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    v[i] = c.dalpha * x0[i] + c.dsigma * eps[i];
  }
  return v;
}

}  // namespace dp2o
