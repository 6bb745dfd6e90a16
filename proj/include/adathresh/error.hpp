#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adt {

// Error categories surfaced by the library. The CLI prints them verbatim in
// its one-line error output, so keep the spellings stable.
enum class ErrorCode {
  io,
  parse,
  out_of_range,
  duplicate_label,
  inconsistent,
  shape_mismatch,
  non_finite,
  invalid_argument,
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::duplicate_label: return "duplicate_label";
    case ErrorCode::inconsistent: return "inconsistent";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  // Errors tied to a text input carry the 1-based line number.
  Error(ErrorCode code, const std::string& file, std::size_t line,
        const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_ = 0;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline void require_shape(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::shape_mismatch, what);
}

}  // namespace detail
}  // namespace adt
