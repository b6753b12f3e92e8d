#pragma once

#include <stdexcept>
#include <string>

namespace gmmcs {

enum class ErrorKind {
  InvalidInput,
  ShapeError,
  DegenerateKernel,
  DegenerateSource,
  DegenerateRow,
  DegeneratePosterior,
  SingularCovariance,
  InsufficientData,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::DegenerateKernel: return "DegenerateKernel";
    case ErrorKind::DegenerateSource: return "DegenerateSource";
    case ErrorKind::DegenerateRow: return "DegenerateRow";
    case ErrorKind::DegeneratePosterior: return "DegeneratePosterior";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// The message is only materialized on failure; hot loops pass literals.
template <typename Message>
inline void require(bool condition, ErrorKind kind, const Message& what) {
  if (!condition) fail(kind, std::string(what));
}

}  // namespace gmmcs
