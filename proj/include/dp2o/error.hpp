#pragma once

#include <stdexcept>
#include <string>

namespace dp2o {

/// Failure categories surfaced by the library. CLI maps validation errors to
/// exit code 1 and divergence to exit code 2.
enum class Errc {
  malformed_row,
  duplicate_triple,
  non_finite_value,
  unknown_metric,
  sparse_group,
  singleton_group,
  empty_family,
  not_direction_aligned,
  ratio_too_large,
  group_size_mismatch,
  empty_group,
  empty_corpus,
  dimension_mismatch,
  out_of_range_t,
  empty_batch,
  empty_list,
  sample_count_mismatch,
  non_convergence,
  divergence_detected,
  bad_config,
  io_error,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_row: return "MalformedRow";
    case Errc::duplicate_triple: return "DuplicateTriple";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::unknown_metric: return "UnknownMetric";
    case Errc::sparse_group: return "SparseGroup";
    case Errc::singleton_group: return "SingletonGroup";
    case Errc::empty_family: return "EmptyFamily";
    case Errc::not_direction_aligned: return "NotDirectionAligned";
    case Errc::ratio_too_large: return "RatioTooLarge";
    case Errc::group_size_mismatch: return "GroupSizeMismatch";
    case Errc::empty_group: return "EmptyGroup";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::out_of_range_t: return "OutOfRangeT";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::empty_list: return "EmptyList";
    case Errc::sample_count_mismatch: return "SampleCountMismatch";
    case Errc::non_convergence: return "NonConvergence";
    case Errc::divergence_detected: return "DivergenceDetected";
    case Errc::bad_config: return "BadConfig";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dp2o
