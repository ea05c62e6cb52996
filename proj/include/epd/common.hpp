// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace epd {

using Seconds = double;
using Bytes = std::uint64_t;

/// Failure categories surfaced by the library. The CLI maps them to exit codes.
enum class ErrorKind {
  InvalidArgument,
  UnknownResolution,
  ConfigInfeasible,
  CapacityExceeded,
  ParseError,
  IncompleteRequest,
  EmptySet,
  EmptyFeasibleSet,
  NoSiblingAvailable,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnknownResolution: return "UnknownResolution";
    case ErrorKind::ConfigInfeasible: return "ConfigInfeasible";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IncompleteRequest: return "IncompleteRequest";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::EmptyFeasibleSet: return "EmptyFeasibleSet";
    case ErrorKind::NoSiblingAvailable: return "NoSiblingAvailable";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Where a stage runs. EncodePrefill is the PD-disaggregated baseline
/// (encode and prefill share GPUs); Monolithic runs all three stages together.
enum class StageRole { Encode, Prefill, Decode, EncodePrefill, Monolithic };

inline std::string_view to_string(StageRole role) {
  switch (role) {
    case StageRole::Encode: return "Encode";
    case StageRole::Prefill: return "Prefill";
    case StageRole::Decode: return "Decode";
    case StageRole::EncodePrefill: return "EncodePrefill";
    case StageRole::Monolithic: return "Monolithic";
  }
  return "Unknown";
}

inline StageRole parse_stage_role(std::string_view text) {
  if (text == "Encode" || text == "E") return StageRole::Encode;
  if (text == "Prefill" || text == "P") return StageRole::Prefill;
  if (text == "Decode" || text == "D") return StageRole::Decode;
  if (text == "EncodePrefill" || text == "EP") return StageRole::EncodePrefill;
  if (text == "Monolithic" || text == "M") return StageRole::Monolithic;
  throw Error(ErrorKind::ParseError, "unknown stage role '" + std::string(text) + "'");
}

struct Resolution {
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
  friend auto operator<=>(const Resolution&, const Resolution&) = default;
};

inline std::string to_string(const Resolution& r) {
  return std::to_string(r.width) + "x" + std::to_string(r.height);
}

inline std::uint64_t ceil_div(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0 : (num + den - 1) / den;
}

}  // namespace epd
