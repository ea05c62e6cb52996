// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "epd/common.hpp"

namespace epd {

struct SloLimits {
  Seconds ttft = 0.0;
  Seconds tpot = 0.0;

  friend bool operator==(const SloLimits&, const SloLimits&) = default;
};

/// One multimodal inference job. Tokens are counted, never materialized.
struct Request {
  std::uint64_t id = 0;
  Seconds arrival = 0.0;
  std::uint32_t prompt_tokens = 0;
  std::vector<Resolution> images;
  std::uint32_t output_tokens = 1;
  SloLimits slo;

  friend bool operator==(const Request&, const Request&) = default;
};

}  // namespace epd
