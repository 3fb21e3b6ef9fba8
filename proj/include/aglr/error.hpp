#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aglr {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  EmptyBag,
  NonFiniteValue,
  DegenerateComponent,
  TooFewSamples,
  SingleClassDataset,
  LengthMismatch,
  UndefinedMetric,
  IncompleteMatrix,
  AccessViolation,
  IoError,
  BadMagic,
  BadVersion,
  TruncatedPayload,
  ParseError,
};

std::string_view to_string(ErrorCode code);

// Every module reports failures through this type; code() is stable, what()
// carries the human-readable context (bag id, file path, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by em_step when a component's responsibility mass vanishes.
class DegenerateComponentError : public Error {
 public:
  DegenerateComponentError(int component, const std::string& message)
      : Error(ErrorCode::DegenerateComponent, message), component_(component) {}

  int component() const noexcept { return component_; }

 private:
  int component_;
};

}  // namespace aglr
