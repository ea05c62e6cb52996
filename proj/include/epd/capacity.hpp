// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

#include "epd/common.hpp"
#include "epd/model_catalog.hpp"

namespace epd {

/// What shares one GPU and how its free memory is split.
struct DeploymentShape {
  StageRole role = StageRole::EncodePrefill;
  double kv_fraction = 0.8;  // share of post-weights memory reserved for the KV cache
  std::uint64_t mm_cache_tokens = 0;
  std::uint32_t prompt_tokens = 22;
  // Activation footprints; the defaults leave them out of the accounting.
  Bytes activation_bytes_per_token = 0;
  Bytes encoder_activation_bytes_per_patch = 0;
};

enum class LimitingFactor { Memory, ContextLength };

inline std::string_view to_string(LimitingFactor f) {
  return f == LimitingFactor::Memory ? "Memory" : "ContextLength";
}

struct CapacityReport {
  std::optional<std::uint64_t> max_images_per_request;
  std::optional<std::uint64_t> max_batch;
  std::optional<double> max_kv_fraction;
  LimitingFactor limiting_factor = LimitingFactor::Memory;
  bool oom = false;   // infeasible even at zero load
  bool oocl = false;  // prompt exceeds the model's context window
};

namespace capacity_detail {

inline constexpr std::uint64_t kSearchCap = 1'000'000;

inline bool hosts_encoder(StageRole r) {
  return r == StageRole::Encode || r == StageRole::EncodePrefill || r == StageRole::Monolithic;
}
inline bool hosts_prefill(StageRole r) {
  return r == StageRole::Prefill || r == StageRole::EncodePrefill || r == StageRole::Monolithic;
}

inline void check_shape(const DeploymentShape& s) {
  if (!(s.kv_fraction >= 0.0 && s.kv_fraction <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "kv_fraction must lie in [0, 1]");
}

struct Budget {
  bool oom = false;
  Bytes available = 0;  // bytes left for per-request demand
};

/// Memory left after weights and (for LLM-hosting roles) the KV reservation.
inline Budget budget(const ModelSpec& m, const HardwareSpec& hw, const DeploymentShape& s) {
  const Bytes weights = weights_bytes(m, s.role);
  if (weights > hw.gpu_memory) return {true, 0};
  const Bytes free = hw.gpu_memory - weights;
  Bytes reserved = 0;
  if (s.role != StageRole::Encode) {
    reserved = static_cast<Bytes>(std::floor(s.kv_fraction * static_cast<double>(free)));
    reserved += s.mm_cache_tokens * mm_bytes_per_token(m);
  }
  if (reserved > free) return {true, 0};
  return {false, free - reserved};
}

struct Demand {
  Bytes bytes = 0;
  std::uint64_t prefill_tokens = 0;
};

/// Per-request memory demand of `images` images at `res` on this shape.
inline Demand request_demand(const ModelSpec& m, const DeploymentShape& s, std::uint64_t images,
                             const Resolution& res, bool include_kv) {
  const std::uint64_t patches = images * patches_for_image(m, res);
  const std::uint64_t mm_tokens = patches * m.tokens_per_patch;
  Demand d;
  d.prefill_tokens = mm_tokens + s.prompt_tokens;
  if (hosts_encoder(s.role)) {
    d.bytes += patches * s.encoder_activation_bytes_per_patch;
    if (!hosts_prefill(s.role)) d.bytes += mm_tokens * mm_bytes_per_token(m);
  }
  if (hosts_prefill(s.role)) {
    const Bytes per_token = (include_kv ? kv_bytes_per_token(m) : 0) + mm_bytes_per_token(m) +
                            s.activation_bytes_per_token;
    d.bytes += d.prefill_tokens * per_token;
  }
  return d;
}

}  // namespace capacity_detail

/// Memory left for request data once weights and reservations are placed.
inline std::optional<Bytes> free_memory(const ModelSpec& m, const HardwareSpec& hw,
                                        const DeploymentShape& s) {
  capacity_detail::check_shape(s);
  auto b = capacity_detail::budget(m, hw, s);
  if (b.oom) return std::nullopt;
  return b.available;
}

/// Batch-1 feasibility of `images` images per request.
inline bool images_feasible(const ModelSpec& m, const HardwareSpec& hw, const DeploymentShape& s,
                            std::uint64_t images, const Resolution& res) {
  auto b = capacity_detail::budget(m, hw, s);
  if (b.oom) return false;
  auto d = capacity_detail::request_demand(m, s, images, res, true);
  return d.bytes <= b.available && d.prefill_tokens <= m.max_context_tokens;
}

inline CapacityReport max_images_per_request(const ModelSpec& m, const HardwareSpec& hw,
                                             const DeploymentShape& s, const Resolution& res) {
  using namespace capacity_detail;
  check_shape(s);
  CapacityReport report;
  const auto b = budget(m, hw, s);
  const auto zero = request_demand(m, s, 0, res, true);
  if (b.oom || zero.bytes > b.available) {
    report.oom = true;
    return report;
  }
  const std::uint64_t per_image_tokens = patches_for_image(m, res) * m.tokens_per_patch;
  const std::uint64_t context_limit =
      s.prompt_tokens > m.max_context_tokens
          ? 0
          : (m.max_context_tokens - s.prompt_tokens) / per_image_tokens;
  // Largest n with memory(n) feasible; memory demand is affine in n.
  const Bytes per_image = request_demand(m, s, 1, res, true).bytes - zero.bytes;
  const std::uint64_t memory_limit =
      per_image == 0 ? kSearchCap : (b.available - zero.bytes) / per_image;
  if (memory_limit > context_limit) {
    report.max_images_per_request = context_limit;
    report.limiting_factor = LimitingFactor::ContextLength;
    report.oocl = context_limit == 0;
  } else {
    report.max_images_per_request = memory_limit;
  }
  return report;
}

inline CapacityReport max_batch(const ModelSpec& m, const HardwareSpec& hw,
                                const DeploymentShape& s, std::uint64_t images_per_request,
                                const Resolution& res) {
  using namespace capacity_detail;
  check_shape(s);
  if (images_per_request < 1)
    throw Error(ErrorKind::InvalidArgument, "images_per_request must be >= 1");
  CapacityReport report;
  const auto b = budget(m, hw, s);
  if (b.oom) {
    report.oom = true;
    return report;
  }
  const auto d = request_demand(m, s, images_per_request, res, true);
  if (d.prefill_tokens > m.max_context_tokens) {
    report.oocl = true;
    report.limiting_factor = LimitingFactor::ContextLength;
    return report;
  }
  const std::uint64_t batch = d.bytes == 0 ? kSearchCap : b.available / d.bytes;
  if (batch == 0) {
    report.oom = true;
    return report;
  }
  report.max_batch = batch;
  return report;
}

/// Largest KV share (1% steps) of post-weights memory that still leaves room for one request.
inline CapacityReport max_kv_fraction(const ModelSpec& m, const HardwareSpec& hw,
                                      const DeploymentShape& s, std::uint64_t images_per_request,
                                      const Resolution& res) {
  using namespace capacity_detail;
  CapacityReport report;
  const Bytes weights = weights_bytes(m, s.role);
  if (weights > hw.gpu_memory) {
    report.oom = true;
    return report;
  }
  const auto d = request_demand(m, s, images_per_request, res, false);
  if (d.prefill_tokens > m.max_context_tokens) {
    report.oocl = true;
    report.limiting_factor = LimitingFactor::ContextLength;
    return report;
  }
  const Bytes free = hw.gpu_memory - weights;
  const Bytes fixed = d.bytes + (s.role == StageRole::Encode ? 0 : s.mm_cache_tokens * mm_bytes_per_token(m));
  if (fixed > free) {
    report.oom = true;
    return report;
  }
  // Encode workers hold no KV cache.
  if (s.role == StageRole::Encode || free == 0) {
    report.max_kv_fraction = 0.0;
    return report;
  }
  // k/100 * free + fixed <= free, in integers.
  const std::uint64_t k = std::min<std::uint64_t>(100, (100 * (free - fixed)) / free);
  report.max_kv_fraction = static_cast<double>(k) / 100.0;
  return report;
}

}  // namespace epd
