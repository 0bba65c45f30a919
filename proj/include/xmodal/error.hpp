#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xmodal {

enum class ErrorKind {
  SingularSystem,
  AsymmetricInput,
  InvalidForMetric,
  MalformedInput,
  ParseError,
  InsufficientSamples,
  DegenerateProblem,
  ShapeError,
  InvalidClusterCount,
  DegenerateKernel,
  LabelError,
  UndefinedAP,
  EmptyEvaluation,
  InvalidK,
  NonFinite,
  Usage,
  Io,
};

std::string_view to_string(ErrorKind kind);

// All library failures surface as this exception; kind() is the
// machine-readable category the CLI prints on exit.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Thrown for near-singular systems; carries the reciprocal condition estimate.
class SingularSystemError : public Error {
 public:
  SingularSystemError(double rcond, const std::string& message)
      : Error(ErrorKind::SingularSystem, message), rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

}  // namespace xmodal
