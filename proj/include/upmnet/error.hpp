#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace upmnet {

enum class ErrorCode {
  // input/contract violations, reported with exit code 1 by the CLI
  Usage,
  ParseError,
  ValidationError,
  InvalidSpec,
  InvalidConfig,
  DimMismatch,
  IndivisibleHeight,
  PartCountMismatch,
  ShapeMismatch,
  UnknownTracklet,
  UnknownSource,
  EmptyTracklet,
  DatasetTooSmall,
  MissingGroundTruth,
  InsufficientCrossCameraIdentities,
  NormDegenerate,
  // runtime failures, exit code 2
  MissingFile,
  IoError,
  BadMagic,
  TruncatedFile,
  NonFiniteValue,
  MissingCache,
};

std::string_view to_string(ErrorCode code);

/// True for errors caused by invalid user input (bad flags, configs, manifests).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace upmnet
