#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cptar {

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  index_out_of_range,
  degenerate_factor,
  singular_matrix,
  non_stationary,
  estimator_failure,
  bad_magic,
  truncated_payload,
  dim_overflow,
  io_failure,
  parse_error,
  config_error,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Library-wide exception. `context` names the operation or file involved
/// and ends up verbatim in the CLI's error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string context = {})
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::string context_;
};

inline std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::index_out_of_range: return "index_out_of_range";
    case ErrorCode::degenerate_factor: return "degenerate_factor";
    case ErrorCode::singular_matrix: return "singular_matrix";
    case ErrorCode::non_stationary: return "non_stationary";
    case ErrorCode::estimator_failure: return "estimator_failure";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::truncated_payload: return "truncated_payload";
    case ErrorCode::dim_overflow: return "dim_overflow";
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::config_error: return "config_error";
  }
  return "unknown";
}

}  // namespace cptar
