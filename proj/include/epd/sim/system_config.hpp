// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epd/common.hpp"
#include "epd/cost_model.hpp"
#include "epd/model_catalog.hpp"
#include "epd/role_switch.hpp"

namespace epd {

enum class SchedulePolicy { FCFS, RoundRobinAssign, LeastLoadedAssign };

inline std::string_view to_string(SchedulePolicy p) {
  switch (p) {
    case SchedulePolicy::FCFS: return "FCFS";
    case SchedulePolicy::RoundRobinAssign: return "RoundRobinAssign";
    case SchedulePolicy::LeastLoadedAssign: return "LeastLoadedAssign";
  }
  return "Unknown";
}

inline SchedulePolicy parse_schedule_policy(std::string_view text) {
  if (text == "FCFS") return SchedulePolicy::FCFS;
  if (text == "RoundRobinAssign" || text == "RR") return SchedulePolicy::RoundRobinAssign;
  if (text == "LeastLoadedAssign" || text == "LL") return SchedulePolicy::LeastLoadedAssign;
  throw Error(ErrorKind::ParseError, "unknown schedule policy '" + std::string(text) + "'");
}

/// One data-parallel instance. For Encode instances `tp` is the intra-instance
/// parallel width; `max_batch` bounds a batch (E/P) or concurrent sequences (D).
struct InstanceConfig {
  StageRole role = StageRole::Encode;
  std::uint32_t tp = 1;
  std::uint32_t pp = 1;
  std::uint32_t max_batch = 1;
  SchedulePolicy policy = SchedulePolicy::FCFS;

  friend bool operator==(const InstanceConfig&, const InstanceConfig&) = default;
};

struct SystemConfig {
  std::vector<InstanceConfig> instances;
  HardwareSpec hardware;
  ModelSpec model;
  CostParams cost;
  std::optional<ControllerParams> role_switch;
  // Shard each request's patches across all active encode instances.
  bool irp_enabled = true;
  double kv_fraction = 0.5;
  std::uint64_t mm_cache_tokens = 3000;
  std::uint32_t block_size = 16;
  bool admission_control = true;
  // Queue-length samples when no controller runs; 0 disables.
  Seconds sample_interval = 0.0;
};

enum class Topology { Disaggregated, AggregatedEncodePrefill, Monolithic };

inline std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::Disaggregated: return "EPD";
    case Topology::AggregatedEncodePrefill: return "EP+D";
    case Topology::Monolithic: return "Monolithic";
  }
  return "Unknown";
}

inline std::uint32_t gpus_used(const std::vector<InstanceConfig>& instances) {
  std::uint32_t total = 0;
  for (const auto& i : instances) total += i.tp * i.pp;
  return total;
}

inline std::map<StageRole, std::uint32_t> role_counts(const std::vector<InstanceConfig>& instances) {
  std::map<StageRole, std::uint32_t> counts;
  for (const auto& i : instances) ++counts[i.role];
  return counts;
}

/// Classifies the instance mix; throws ConfigInfeasible when a pipeline stage has no server.
inline Topology classify(const std::vector<InstanceConfig>& instances) {
  auto c = role_counts(instances);
  auto n = [&](StageRole r) { return c.count(r) ? c[r] : 0u; };
  const auto e = n(StageRole::Encode), p = n(StageRole::Prefill), d = n(StageRole::Decode),
             ep = n(StageRole::EncodePrefill), m = n(StageRole::Monolithic);
  if (e > 0 && p > 0 && d > 0 && ep == 0 && m == 0) return Topology::Disaggregated;
  if (ep > 0 && d > 0 && e == 0 && p == 0 && m == 0) return Topology::AggregatedEncodePrefill;
  if (m > 0 && e == 0 && p == 0 && d == 0 && ep == 0) return Topology::Monolithic;
  throw Error(ErrorKind::ConfigInfeasible,
              "instance roles must form E+P+D, EP+D, or Monolithic-only deployments");
}

inline void validate(const SystemConfig& cfg) {
  validate(cfg.model);
  validate(cfg.hardware);
  validate(cfg.cost);
  if (cfg.role_switch) validate(*cfg.role_switch);
  if (!(cfg.kv_fraction > 0.0 && cfg.kv_fraction <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "kv_fraction must lie in (0, 1]");
  if (cfg.block_size == 0) throw Error(ErrorKind::InvalidArgument, "block_size must be > 0");
  if (cfg.instances.empty()) throw Error(ErrorKind::ConfigInfeasible, "no instances configured");
  for (const auto& i : cfg.instances) {
    if (i.tp < 1 || i.pp < 1 || i.max_batch < 1)
      throw Error(ErrorKind::ConfigInfeasible, "tp, pp and max_batch must be >= 1");
    if (i.role == StageRole::Encode && i.pp != 1)
      throw Error(ErrorKind::ConfigInfeasible, "encode instances must have pp = 1");
  }
  if (gpus_used(cfg.instances) > cfg.hardware.num_gpus)
    throw Error(ErrorKind::ConfigInfeasible,
                "instances need " + std::to_string(gpus_used(cfg.instances)) + " GPUs, only " +
                    std::to_string(cfg.hardware.num_gpus) + " available");
  classify(cfg.instances);
  std::map<StageRole, SchedulePolicy> stage_policy;
  for (const auto& i : cfg.instances) {
    auto [it, inserted] = stage_policy.emplace(i.role, i.policy);
    if (!inserted && it->second != i.policy)
      throw Error(ErrorKind::ConfigInfeasible,
                  "all instances of a stage must share one scheduling policy");
  }
}

/// Expands "xEyPzD" shorthand ("5E1P2D", "7EP1D", "8M") into instance lists.
/// Per-role templates supply tp/pp/batch/policy; missing roles use defaults.
inline std::vector<InstanceConfig> expand_shorthand(
    std::string_view text, const std::map<StageRole, InstanceConfig>& templates = {}) {
  std::vector<InstanceConfig> out;
  std::size_t i = 0;
  if (text.empty()) throw Error(ErrorKind::ParseError, "empty deployment shorthand");
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i])))
      throw Error(ErrorKind::ParseError, "shorthand '" + std::string(text) + "': expected a count");
    std::uint32_t count = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
      count = count * 10 + static_cast<std::uint32_t>(text[i++] - '0');
    StageRole role;
    if (text.substr(i, 2) == "EP") {
      role = StageRole::EncodePrefill;
      i += 2;
    } else if (i < text.size() && (text[i] == 'E' || text[i] == 'P' || text[i] == 'D' || text[i] == 'M')) {
      role = parse_stage_role(text.substr(i, 1));
      ++i;
    } else {
      throw Error(ErrorKind::ParseError, "shorthand '" + std::string(text) + "': expected E, P, D, EP or M");
    }
    InstanceConfig tmpl;
    if (auto it = templates.find(role); it != templates.end()) tmpl = it->second;
    tmpl.role = role;
    for (std::uint32_t k = 0; k < count; ++k) out.push_back(tmpl);
  }
  return out;
}

inline std::string shorthand(const std::vector<InstanceConfig>& instances) {
  auto c = role_counts(instances);
  std::string out;
  const std::pair<StageRole, const char*> order[] = {{StageRole::Encode, "E"},
                                                     {StageRole::EncodePrefill, "EP"},
                                                     {StageRole::Prefill, "P"},
                                                     {StageRole::Decode, "D"},
                                                     {StageRole::Monolithic, "M"}};
  for (auto [role, code] : order)
    if (c.count(role)) out += std::to_string(c[role]) + code;
  return out;
}

}  // namespace epd
