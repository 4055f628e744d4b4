#pragma once

#include <stdexcept>
#include <string>

namespace sharpiv {

/* Failure categories surfaced to callers (and mapped to structured CLI
 * errors).  `Usage` is reserved for bad command-line invocations; everything
 * else is a data or runtime problem. */
enum class ErrorKind {
  Schema,      // malformed input file, unknown column, unparsable field
  Validation,  // values outside the documented domain (d not in {0,1}, NaN, ...)
  Config,      // impossible configuration (alpha outside (0,1), J < 2, ...)
  Numerics,    // non-convergence, separation, singular design, indefinite covariance
  Bootstrap,   // too many degenerate replicates
  Internal
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  const char* kind_name() const noexcept {
    switch (kind_) {
      case ErrorKind::Schema: return "schema";
      case ErrorKind::Validation: return "validation";
      case ErrorKind::Config: return "config";
      case ErrorKind::Numerics: return "numerics";
      case ErrorKind::Bootstrap: return "bootstrap";
      case ErrorKind::Internal: return "internal";
    }
    return "internal";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace sharpiv
