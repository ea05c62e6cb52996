// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "epd/common.hpp"
#include "epd/cost_model.hpp"
#include "epd/model_catalog.hpp"
#include "epd/sim/system_config.hpp"

namespace epd::sim {

/// Splits `patches` into `width` balanced shards; the first `patches % width` get one extra.
inline std::vector<std::uint64_t> irp_shard(std::uint64_t patches, std::uint32_t width) {
  if (width < 1) throw Error(ErrorKind::InvalidArgument, "shard width must be >= 1");
  std::vector<std::uint64_t> out(width, patches / width);
  for (std::uint64_t i = 0; i < patches % width; ++i) ++out[i];
  return out;
}

/// Picks an instance for a queued item. Round-robin advances `cursor`;
/// least-loaded takes the minimum load, lowest index on ties. FCFS stages
/// normally share one queue, so FCFS here falls back to round-robin.
inline std::size_t assign_instance(std::span<const double> loads, SchedulePolicy policy,
                                   std::uint64_t& cursor) {
  if (loads.empty()) throw Error(ErrorKind::InvalidArgument, "no instance to assign to");
  if (policy == SchedulePolicy::LeastLoadedAssign) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < loads.size(); ++i)
      if (loads[i] < loads[best]) best = i;
    return best;
  }
  return static_cast<std::size_t>(cursor++ % loads.size());
}

/// Cache capacities (in tokens) of one instance in a given role.
struct CacheSizing {
  std::uint64_t mm_tokens = 0;
  std::uint64_t kv_tokens = 0;
};

inline bool role_has_mm(StageRole r) { return r != StageRole::Decode; }
inline bool role_has_kv(StageRole r) { return r != StageRole::Encode; }

/// Encode workers give all post-weights memory to the MM cache. LLM-hosting
/// roles reserve `mm_cache_tokens` for MM and `kv_fraction` of the rest for KV.
/// Throws ConfigInfeasible when weights or the MM reservation do not fit.
inline CacheSizing cache_sizing(const SystemConfig& cfg, StageRole role, std::uint32_t tp,
                                std::uint32_t pp) {
  const Bytes memory = cfg.hardware.gpu_memory * tp * pp;
  const Bytes weights = weights_bytes(cfg.model, role);
  if (weights > memory)
    throw Error(ErrorKind::ConfigInfeasible,
                std::string(to_string(role)) + " weights do not fit in " + std::to_string(tp * pp) +
                    " GPU(s)");
  const Bytes free = memory - weights;
  const Bytes mm_bpt = mm_bytes_per_token(cfg.model);
  const Bytes kv_bpt = kv_bytes_per_token(cfg.model);
  const std::uint64_t bs = cfg.block_size;
  CacheSizing s;
  if (role == StageRole::Encode) {
    s.mm_tokens = free / mm_bpt / bs * bs;
    return s;
  }
  Bytes mm_reserved = 0;
  if (role_has_mm(role)) {
    mm_reserved = cfg.mm_cache_tokens * mm_bpt;
    if (mm_reserved > free)
      throw Error(ErrorKind::ConfigInfeasible, "MM cache reservation exceeds free memory");
    s.mm_tokens = cfg.mm_cache_tokens / bs * bs;
  }
  const double kv_bytes = cfg.kv_fraction * static_cast<double>(free - mm_reserved);
  s.kv_tokens = static_cast<std::uint64_t>(kv_bytes / static_cast<double>(kv_bpt * bs)) * bs;
  return s;
}

/// GPU budget, topology, and per-instance memory checks.
inline void validate_deployable(const SystemConfig& cfg) {
  validate(cfg);
  for (const auto& i : cfg.instances) cache_sizing(cfg, i.role, i.tp, i.pp);
}

}  // namespace epd::sim
