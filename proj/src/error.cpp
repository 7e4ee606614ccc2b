// Copyright 2026 The trajlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "trajlab/error.hpp"

namespace trajlab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InsufficientLength: return "InsufficientLength";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidSmoothing: return "InvalidSmoothing";
    case ErrorCode::NoSuchCheckpoint: return "NoSuchCheckpoint";
    case ErrorCode::ZeroProbability: return "ZeroProbability";
    case ErrorCode::CapabilityUnsupported: return "CapabilityUnsupported";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::InsufficientExemplars: return "InsufficientExemplars";
    case ErrorCode::EmptyOption: return "EmptyOption";
    case ErrorCode::EmptyTask: return "EmptyTask";
    case ErrorCode::IncompleteRun: return "IncompleteRun";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace trajlab
