// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "epd/common.hpp"
#include "epd/cost_model.hpp"

namespace epd {

/// Reactive controller settings. Interval and threshold defaults are artifact
/// choices; the switch latencies come from CostParams.
struct ControllerParams {
  Seconds monitor_interval = 1.0;
  double imbalance_threshold = 3.0;
  double smoothing = 1.0;  // seconds, added to both loads before taking the ratio
  std::uint32_t min_instances_per_stage = 1;
  Seconds cooldown = 2.0;
  Seconds onload_latency = 0.01;
  // A stage gives up an instance only if its recent utilization, spread over
  // one fewer instance, stays at or below this cap.
  double max_source_utilization = 0.9;
  Seconds utilization_window = 5.0;
};

inline void validate(const ControllerParams& p) {
  if (!(p.monitor_interval > 0.0))
    throw Error(ErrorKind::InvalidArgument, "monitor_interval must be > 0");
  if (!(p.imbalance_threshold > 1.0))
    throw Error(ErrorKind::InvalidArgument, "imbalance_threshold must be > 1");
  if (p.min_instances_per_stage < 1)
    throw Error(ErrorKind::InvalidArgument, "min_instances_per_stage must be >= 1");
  if (!(p.smoothing >= 0.0) || !(p.cooldown >= 0.0) || !(p.onload_latency > 0.0))
    throw Error(ErrorKind::InvalidArgument, "smoothing/cooldown must be >= 0, onload_latency > 0");
  if (!(p.max_source_utilization > 0.0) || !(p.utilization_window > 0.0))
    throw Error(ErrorKind::InvalidArgument, "utilization cap and window must be > 0");
}

struct SwitchEventRecord {
  Seconds time = 0.0;  // decision
  std::uint32_t instance = 0;
  StageRole source = StageRole::Encode;
  StageRole target = StageRole::Decode;
  Seconds offload_done = 0.0;
  Seconds migration_done = 0.0;
  Seconds onload_done = 0.0;
  std::uint32_t redistributed = 0;
};

/// Migration phase length: model and cache type change whenever Encode is involved.
inline Seconds switch_latency(const CostParams& c, StageRole source, StageRole target) {
  if (source == StageRole::Encode || target == StageRole::Encode) return c.switch_latency_e;
  return c.switch_latency_pd;
}

/// Load of one serving instance: queued and in-flight work (patches, prefill
/// tokens, remaining decode tokens) priced in estimated service seconds so
/// that stages compare on one scale.
struct InstanceLoad {
  std::uint32_t id = 0;
  StageRole role = StageRole::Encode;
  double load = 0.0;
  bool can_encode = true;  // pipeline-parallel instances cannot become encoders
};

struct ClusterView {
  Seconds now = 0.0;
  std::vector<InstanceLoad> instances;       // active E/P/D instances only
  std::array<double, 3> stage_load{};        // E, P, D totals, including shared queues
  std::array<double, 3> stage_utilization{};  // mean busy fraction per instance, recent window
  bool switch_in_progress = false;
  std::optional<Seconds> last_switch_time;
};

struct SwitchDecision {
  std::uint32_t instance = 0;
  StageRole source = StageRole::Encode;
  StageRole target = StageRole::Decode;

  friend bool operator==(const SwitchDecision&, const SwitchDecision&) = default;
};

namespace switch_detail {

inline constexpr std::array<StageRole, 3> kStages = {StageRole::Encode, StageRole::Prefill,
                                                      StageRole::Decode};

inline int stage_index(StageRole r) {
  switch (r) {
    case StageRole::Encode: return 0;
    case StageRole::Prefill: return 1;
    case StageRole::Decode: return 2;
    default: return -1;
  }
}

}  // namespace switch_detail

/// Moves one instance from the least-loaded eligible stage to the most loaded
/// one when their per-instance load ratio exceeds the threshold. A stage is
/// eligible when it keeps more than the minimum instances and would not be
/// pushed past the utilization cap.
inline std::optional<SwitchDecision> monitor_and_decide(const ClusterView& view,
                                                        const ControllerParams& params) {
  using namespace switch_detail;
  if (view.switch_in_progress) return std::nullopt;
  if (view.last_switch_time && view.now - *view.last_switch_time < params.cooldown)
    return std::nullopt;

  std::array<std::uint32_t, 3> count{};
  for (const auto& inst : view.instances) {
    const int s = stage_index(inst.role);
    if (s >= 0) ++count[s];
  }
  for (auto c : count)
    if (c == 0) return std::nullopt;

  std::array<double, 3> avg{};
  for (int s = 0; s < 3; ++s) avg[s] = view.stage_load[s] / count[s];

  int target = 0;
  for (int s = 1; s < 3; ++s)
    if (avg[s] > avg[target]) target = s;

  int source = -1;
  for (int s = 0; s < 3; ++s) {
    if (s == target || count[s] <= params.min_instances_per_stage) continue;
    const double projected = view.stage_utilization[s] * count[s] / (count[s] - 1);
    if (projected > params.max_source_utilization) continue;
    if (source < 0 || avg[s] < avg[source] ||
        (avg[s] == avg[source] && count[s] > count[source]))
      source = s;
  }
  if (source < 0) return std::nullopt;

  const double ratio = (avg[target] + params.smoothing) / (avg[source] + params.smoothing);
  if (!(ratio > params.imbalance_threshold)) return std::nullopt;

  const InstanceLoad* pick = nullptr;
  for (const auto& inst : view.instances) {
    if (stage_index(inst.role) != source) continue;
    if (kStages[target] == StageRole::Encode && !inst.can_encode) continue;
    if (pick == nullptr || inst.load < pick->load || (inst.load == pick->load && inst.id < pick->id))
      pick = &inst;
  }
  if (pick == nullptr) return std::nullopt;
  return SwitchDecision{pick->id, kStages[source], kStages[target]};
}

}  // namespace epd
