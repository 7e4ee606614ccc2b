// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajlab {

enum class ErrorCode {
  EmptyInput,
  InsufficientLength,
  UnknownToken,
  InvalidArgument,
  InvalidSmoothing,
  NoSuchCheckpoint,
  ZeroProbability,
  CapabilityUnsupported,
  AlignmentError,
  WindowTooShort,
  EmptySelection,
  DegenerateDistribution,
  InsufficientExemplars,
  EmptyOption,
  EmptyTask,
  IncompleteRun,
  ConfigError,
  IoError,
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI's exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trajlab
