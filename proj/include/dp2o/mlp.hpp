#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dp2o/error.hpp"
#include "dp2o/rng.hpp"
#include "dp2o/schedule.hpp"

namespace dp2o {

enum class PredictionHead { Epsilon, Velocity };

inline const char* head_name(PredictionHead head) {
  return head == PredictionHead::Epsilon ? "epsilon" : "velocity";
}

inline PredictionHead parse_head(std::string_view text) {
  if (text == "epsilon") return PredictionHead::Epsilon;
  if (text == "velocity") return PredictionHead::Velocity;
  fail(Errc::bad_config, "unknown prediction head '" + std::string(text) +
                             "' (expected epsilon|velocity)");
}

/// Fully-connected net mapping [x_t, t, cond] -> prediction of x_t's
/// dimension. tanh hidden activations, linear output.
struct MlpArchitecture {
  std::size_t data_dim = 2;
  std::size_t cond_dim = 2;
  std::vector<std::size_t> hidden = {64, 64};

  std::size_t input_dim() const { return data_dim + 1 + cond_dim; }
  std::size_t output_dim() const { return data_dim; }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_dim());
    for (std::size_t h : hidden) sizes.push_back(h);
    sizes.push_back(output_dim());
    return sizes;
  }

  std::size_t param_count() const {
    const auto sizes = layer_sizes();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      n += sizes[l + 1] * sizes[l] + sizes[l + 1];
    }
    return n;
  }

  bool operator==(const MlpArchitecture&) const = default;
};

/// Flat parameter vector. Layout per layer: weight matrix (row-major,
/// out x in) followed by bias.
struct NetworkParams {
  MlpArchitecture arch;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const NetworkParams&) const = default;
};

inline NetworkParams zero_params(const MlpArchitecture& arch) {
  return NetworkParams{arch, std::vector<double>(arch.param_count(), 0.0)};
}

/// Gaussian init scaled by 1/sqrt(fan_in); biases start at zero.
inline NetworkParams random_params(const MlpArchitecture& arch,
                                   std::uint64_t seed) {
  NetworkParams params = zero_params(arch);
  Prng rng(derive_seed(seed, /*tag=*/0x171ull));
  const auto sizes = arch.layer_sizes();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t fan_in = sizes[l];
    const std::size_t fan_out = sizes[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
      params.values[offset + i] = scale * rng.normal();
    }
    offset += fan_out * fan_in + fan_out;  // biases stay zero
  }
  return params;
}

/// Cached per-layer activations from one forward pass, consumed by
/// backward().
struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> activations;  // post-nonlinearity per layer
  std::vector<double> output;
};

namespace detail {

inline void check_forward_dims(const MlpArchitecture& arch,
                               std::span<const double> x_t,
                               std::span<const double> cond) {
  if (x_t.size() != arch.data_dim || cond.size() != arch.cond_dim) {
    fail(Errc::dimension_mismatch,
         "predict expects x_t dim " + std::to_string(arch.data_dim) +
             " and cond dim " + std::to_string(arch.cond_dim) + ", got " +
             std::to_string(x_t.size()) + " and " +
             std::to_string(cond.size()));
  }
}

}  // namespace detail

/// Deterministic forward pass; fills `trace` for a later backward pass.
inline std::vector<double> predict_traced(const NetworkParams& params,
                                          std::span<const double> x_t, double t,
                                          std::span<const double> cond,
                                          ForwardTrace& trace) {
  detail::check_forward_dims(params.arch, x_t, cond);
  const auto sizes = params.arch.layer_sizes();

  trace.input.clear();
  trace.input.reserve(sizes[0]);
  trace.input.insert(trace.input.end(), x_t.begin(), x_t.end());
  trace.input.push_back(t);
  trace.input.insert(trace.input.end(), cond.begin(), cond.end());

  trace.activations.assign(sizes.size() - 2, {});

  const double* p = params.values.data();
  std::vector<double> current = trace.input;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in_dim = sizes[l];
    const std::size_t out_dim = sizes[l + 1];
    const double* weight = p;
    const double* bias = p + out_dim * in_dim;
    std::vector<double> next(out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias[o];
      const double* row = weight + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * current[i];
      next[o] = acc;
    }
    const bool last = l + 2 == sizes.size();
    if (!last) {
      for (double& v : next) v = std::tanh(v);
      trace.activations[l] = next;
    }
    current = std::move(next);
    p = bias + out_dim;
  }
  trace.output = current;
  return current;
}

inline std::vector<double> predict(const NetworkParams& params,
                                   std::span<const double> x_t, double t,
                                   std::span<const double> cond) {
  ForwardTrace trace;
  return predict_traced(params, x_t, t, cond, trace);
}

struct BackwardResult {
  std::vector<double> param_grad;  // same layout as NetworkParams::values
  std::vector<double> input_grad;  // d/d[x_t, t, cond]

  /// Slice of input_grad covering x_t.
  std::span<const double> x_t_grad(const MlpArchitecture& arch) const {
    return {input_grad.data(), arch.data_dim};
  }
};

/// Exact reverse-mode derivative of predict() under the linear functional
/// upstream . output. Accumulates into `result` when accumulate is set.
inline void backward_into(const NetworkParams& params,
                          const ForwardTrace& trace,
                          std::span<const double> upstream,
                          BackwardResult& result, bool accumulate = false) {
  const auto sizes = params.arch.layer_sizes();
  if (upstream.size() != sizes.back()) {
    fail(Errc::dimension_mismatch,
         "upstream grad dim " + std::to_string(upstream.size()) +
             " != output dim " + std::to_string(sizes.back()));
  }
  if (!accumulate) {
    result.param_grad.assign(params.values.size(), 0.0);
    result.input_grad.assign(sizes[0], 0.0);
  }

  // Offset of each layer's weight block in the flat vector.
  std::vector<std::size_t> offsets(sizes.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offsets[l] = off;
    off += sizes[l + 1] * sizes[l] + sizes[l + 1];
  }

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = sizes.size() - 1; l-- > 0;) {
    const std::size_t in_dim = sizes[l];
    const std::size_t out_dim = sizes[l + 1];
    const double* weight = params.values.data() + offsets[l];
    double* weight_grad = result.param_grad.data() + offsets[l];
    double* bias_grad = weight_grad + out_dim * in_dim;
    const std::vector<double>& layer_input =
        l == 0 ? trace.input : trace.activations[l - 1];

    std::vector<double> prev_delta(in_dim, 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = delta[o];
      bias_grad[o] += d;
      const double* row = weight + o * in_dim;
      double* grad_row = weight_grad + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) {
        grad_row[i] += d * layer_input[i];
        prev_delta[i] += d * row[i];
      }
    }
    if (l > 0) {
      // d tanh(z) = 1 - tanh(z)^2, with tanh(z) cached in the trace.
      const std::vector<double>& act = trace.activations[l - 1];
      for (std::size_t i = 0; i < in_dim; ++i) {
        prev_delta[i] *= 1.0 - act[i] * act[i];
      }
      delta = std::move(prev_delta);
    } else {
      for (std::size_t i = 0; i < in_dim; ++i) {
        result.input_grad[i] += prev_delta[i];
      }
    }
  }
}

inline BackwardResult backward(const NetworkParams& params,
                               const ForwardTrace& trace,
                               std::span<const double> upstream) {
  BackwardResult result;
  backward_into(params, trace, upstream, result, false);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with an architecture descriptor, the head and
// schedule the parameters were trained under, and the flat parameter list.

struct Checkpoint {
  NetworkParams params;
  PredictionHead head = PredictionHead::Velocity;
  ScheduleKind schedule = ScheduleKind::Flow;
};

inline void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::ordered_json doc;
  doc["format"] = "dp2o-checkpoint";
  doc["version"] = 1;
  doc["architecture"] = {{"data_dim", ckpt.params.arch.data_dim},
                         {"cond_dim", ckpt.params.arch.cond_dim},
                         {"hidden", ckpt.params.arch.hidden}};
  doc["head"] = head_name(ckpt.head);
  doc["schedule"] = schedule_kind_name(ckpt.schedule);
  doc["params"] = ckpt.params.values;
  out << doc.dump() << '\n';
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  save_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "dp2o-checkpoint" ||
      doc.value("version", 0) != 1) {
    fail(Errc::io_error, "not a version-1 dp2o checkpoint");
  }
  Checkpoint ckpt;
  const auto& arch = doc.at("architecture");
  ckpt.params.arch.data_dim = arch.at("data_dim").get<std::size_t>();
  ckpt.params.arch.cond_dim = arch.at("cond_dim").get<std::size_t>();
  ckpt.params.arch.hidden = arch.at("hidden").get<std::vector<std::size_t>>();
  ckpt.head = parse_head(doc.at("head").get<std::string>());
  ckpt.schedule = parse_schedule_kind(doc.at("schedule").get<std::string>());
  ckpt.params.values = doc.at("params").get<std::vector<double>>();
  if (ckpt.params.values.size() != ckpt.params.arch.param_count()) {
    fail(Errc::io_error,
         "checkpoint parameter count " +
             std::to_string(ckpt.params.values.size()) +
             " does not match architecture (" +
             std::to_string(ckpt.params.arch.param_count()) + ")");
  }
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace dp2o
