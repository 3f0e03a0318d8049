#pragma once

#include <stdexcept>
#include <string>

namespace fcache {

enum class ErrorKind {
  InvalidShape,
  InvalidValue,
  InvalidConfig,
  ShapeMismatch,
  DegenerateVector,
  Decode,
  Format,
  Corruption,
  OutOfRange,
  AugmentationUnavailable,
  NotFound,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` lets callers (the CLI in
/// particular) map failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fcache
