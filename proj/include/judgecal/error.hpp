#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace judgecal {

enum class ErrorCode {
  invalid_argument,
  not_found,
  io,
  format,
  dimension_mismatch,
  non_finite,
  degenerate_input,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::degenerate_input: return "degenerate_input";
  }
  return "unknown";
}

/// Every failure raised by the library. The message is a single line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace detail
}  // namespace judgecal
