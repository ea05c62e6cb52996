// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epd/capacity.hpp"
#include "epd/common.hpp"
#include "epd/cost_model.hpp"
#include "epd/model_catalog.hpp"
#include "epd/optimizer.hpp"
#include "epd/role_switch.hpp"
#include "epd/sim/system_config.hpp"
#include "epd/workload.hpp"

namespace epd::presets {

/// Synthetic stage-latency calibrations. No measured profiles back these
/// numbers; they are sized so an A100-class encoder dominates multi-image
/// requests, as the encode-heavy experiments assume.
inline CostParams synthetic_cost(const std::string& model) {
  CostParams c;
  if (model == "InternVL2-8B") {
    c.enc_base = 0.01;
    c.enc_per_patch = 0.0275;
    c.prefill_base = 0.02;
    c.prefill_per_token = 5e-5;
    c.prefill_quad = 2e-9;
    c.decode_base = 0.025;
    c.decode_per_seq = 6e-4;
    c.decode_per_kv_token = 5e-8;
  } else if (model == "InternVL2-26B") {
    c.enc_base = 0.01;
    c.enc_per_patch = 0.092;
    c.prefill_base = 0.04;
    c.prefill_per_token = 1.2e-4;
    c.prefill_quad = 4e-9;
    c.decode_base = 0.04;
    c.decode_per_seq = 1e-3;
    c.decode_per_kv_token = 8e-8;
  } else {
    c.enc_base = 0.01;
    c.enc_per_patch = 0.055;
    c.prefill_base = 0.1;
    c.prefill_per_token = 1.2e-4;
    c.prefill_quad = 2e-9;
    c.decode_base = 0.02;
    c.decode_per_seq = 5e-4;
    c.decode_per_kv_token = 5e-8;
  }
  return c;
}

/// One model on one 8-GPU node with the synthetic calibration.
inline SystemConfig base_system(const ModelSpec& model, const std::string& shorthand_text = "5E2P1D",
                                std::uint32_t decode_batch = 16) {
  SystemConfig cfg;
  cfg.model = model;
  cfg.hardware = models::a100_node();
  cfg.cost = synthetic_cost(model.name);
  cfg.mm_cache_tokens = model.max_context_tokens;
  InstanceConfig d;
  d.role = StageRole::Decode;
  d.max_batch = decode_batch;
  cfg.instances = expand_shorthand(shorthand_text, {{StageRole::Decode, d}});
  return cfg;
}

/// Capacity accounting with a synthetic encoder activation footprint
/// (100 MB per patch in flight). KV takes 80% of post-weights memory.
inline DeploymentShape heavy_shape(StageRole role) {
  DeploymentShape s;
  s.role = role;
  s.kv_fraction = 0.8;
  s.encoder_activation_bytes_per_patch = 100'000'000;
  return s;
}

/// Images per request and resolution of the batch-size comparison.
inline constexpr std::uint32_t kHeavyImages = 10;
inline const Resolution kHeavyResolution = models::kMedium;

struct NamedSystem {
  std::string name;
  SystemConfig config;
};

struct ExperimentPreset {
  std::string name;
  std::string description;
  ModelSpec model;
  WorkloadSpec workload;
  std::vector<NamedSystem> systems;
  SloLimits slo;
  std::vector<double> rate_grid;
  std::uint64_t seed = 0;
  // Shifted-output workloads (role switching); empty phases mean plain Poisson.
  std::optional<std::pair<OutputPhase, OutputPhase>> shifted;
  std::optional<ConfigSpace> space;
};

inline std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> out;
  for (int i = 0; lo + i * step <= hi + 1e-9; ++i) out.push_back(lo + i * step);
  return out;
}

/// EPD against the two aggregated baselines on eight GPUs.
inline ExperimentPreset end_to_end(const std::string& name, const ModelSpec& model, std::uint32_t images) {
  ExperimentPreset p;
  p.name = name;
  p.description = model.name + ", " + std::to_string(images) + " 4K images per request, EPD vs EP+D vs monolithic";
  p.model = model;
  p.slo = *slo_table_lookup(model.name, images);
  p.workload.num_requests = 100;
  p.workload.images_per_request = images;
  p.workload.resolution = models::k4K;
  p.workload.output_tokens = 10;
  p.workload.slo = p.slo;
  p.systems = {{"EPD", base_system(model, "5E2P1D")},
               {"DistServe", base_system(model, "7EP1D")},
               {"vLLM", base_system(model, "8M")}};
  for (auto& s : p.systems)
    for (auto& i : s.config.instances)
      if (i.role == StageRole::Monolithic) i.max_batch = 16;
  p.rate_grid = grid(0.25, 4.0, 0.25);
  return p;
}

/// Encode-heavy IRP ablation: the same 5E2P1D system with sharding on and off.
inline ExperimentPreset irp_ablation(std::uint32_t images) {
  ExperimentPreset p;
  p.name = "irp-ablation";
  p.model = models::minicpm_v26();
  p.description = "IRP on/off, " + std::to_string(images) + " 4K images per request";
  p.slo = *slo_table_lookup(p.model.name, images);
  p.workload.rate = 0.25;
  p.workload.num_requests = 100;
  p.workload.images_per_request = images;
  p.workload.resolution = models::k4K;
  p.workload.output_tokens = 10;
  p.workload.slo = p.slo;
  auto on = base_system(p.model, "5E2P1D");
  auto off = on;
  off.irp_enabled = false;
  p.systems = {{"irp-on", on}, {"irp-off", off}};
  p.rate_grid = {p.workload.rate};
  return p;
}

inline constexpr const char* kRestrictedSpaceName = "restricted-appendixB4";

/// Uniform batch sizes per stage, tp = pp = 1, exactly eight GPUs.
inline ConfigSpace restricted_space() {
  ConfigSpace s;
  s.gpu_budget = 8;
  s.budget_mode = BudgetMode::Exactly;
  s.encode.counts = s.prefill.counts = s.decode.counts = {1, 2, 3, 4, 5, 6};
  s.encode.batch = {1, 2, 4, 8};
  s.prefill.batch = {1, 2, 4};
  s.decode.batch = {16, 32, 64, 128};
  s.policies = {SchedulePolicy::FCFS};
  s.irp = {true, false};
  return s;
}

inline ExperimentPreset optimizer_ablation() {
  ExperimentPreset p;
  p.name = "optimizer-ablation";
  p.model = models::minicpm_v26();
  p.description = "solver vs random configs on the restricted space, 6 4K images per request";
  p.slo = *slo_table_lookup(p.model.name, 6);
  p.workload.num_requests = 100;
  p.workload.images_per_request = 6;
  p.workload.resolution = models::k4K;
  p.workload.output_tokens = 10;
  p.workload.slo = p.slo;
  p.systems = {{"base", base_system(p.model, "5E2P1D")}};
  p.rate_grid = grid(0.25, 4.0, 0.25);
  p.space = restricted_space();
  return p;
}

/// Output lengths jump from 50 to 500 tokens after the first ten requests.
inline ExperimentPreset switch_ablation() {
  ExperimentPreset p;
  p.name = "switch-ablation";
  p.model = models::minicpm_v26();
  p.description = "role switching on a shifted workload, initial 5E1P2D";
  p.slo = *slo_table_lookup(p.model.name, 2);
  p.workload.rate = 3.0;
  p.workload.num_requests = 100;
  p.workload.images_per_request = 1;
  p.workload.resolution = models::k4K;
  p.workload.slo = p.slo;
  p.shifted = std::pair{OutputPhase{10, 50}, OutputPhase{90, 500}};
  auto off = base_system(p.model, "5E1P2D", 8);
  auto on = off;
  on.role_switch = ControllerParams{};
  p.systems = {{"switch-on", on}, {"switch-off", off}};
  p.rate_grid = {p.workload.rate};
  return p;
}

/// Offline throughput: encode-split vs prefill-only shapes over decode batch sizes.
inline ExperimentPreset offline_throughput() {
  ExperimentPreset p;
  p.name = "offline-throughput";
  p.model = models::minicpm_v26();
  p.description = "offline throughput, 5E2P1D vs 7EP1D, decode batch sweep";
  p.slo = *slo_table_lookup(p.model.name, 4);
  p.workload.rate = 50.0;
  p.workload.num_requests = 200;
  p.workload.images_per_request = 4;
  p.workload.resolution = models::k4K;
  p.workload.output_tokens = 10;
  p.workload.slo = p.slo;
  for (std::uint32_t b : {16u, 32u, 64u, 128u}) {
    p.systems.push_back({"5E2P1D-b" + std::to_string(b), base_system(p.model, "5E2P1D", b)});
    p.systems.push_back({"7EP1D-b" + std::to_string(b), base_system(p.model, "7EP1D", b)});
  }
  p.rate_grid = {p.workload.rate};
  return p;
}

inline std::vector<std::string> names() {
  return {"fig5-minicpm-2img", "fig5-minicpm-4img", "fig5-internvl8b-2img", "fig5-internvl8b-4img",
          "fig5-internvl26b-2img", "fig5-internvl26b-4img", "fig5-minicpm-6img", "fig5-minicpm-8img",
          "ttft-minicpm-4img", "irp-ablation", "optimizer-ablation", "switch-ablation", "offline-throughput"};
}

inline ExperimentPreset by_name(const std::string& name) {
  using namespace models;
  if (name == "fig5-minicpm-2img") return end_to_end(name, minicpm_v26(), 2);
  if (name == "fig5-minicpm-4img") return end_to_end(name, minicpm_v26(), 4);
  if (name == "fig5-internvl8b-2img") return end_to_end(name, internvl2_8b(), 2);
  if (name == "fig5-internvl8b-4img") return end_to_end(name, internvl2_8b(), 4);
  if (name == "fig5-internvl26b-2img") return end_to_end(name, internvl2_26b(), 2);
  if (name == "fig5-internvl26b-4img") return end_to_end(name, internvl2_26b(), 4);
  if (name == "fig5-minicpm-6img") return end_to_end(name, minicpm_v26(), 6);
  if (name == "fig5-minicpm-8img") return end_to_end(name, minicpm_v26(), 8);
  if (name == "ttft-minicpm-4img") {
    auto p = end_to_end(name, minicpm_v26(), 4);
    p.description = "TTFT distributions at a fixed rate, " + p.description;
    p.rate_grid = {1.0};
    p.workload.rate = 1.0;
    return p;
  }
  if (name == "irp-ablation") return irp_ablation(4);
  if (name == "optimizer-ablation") return optimizer_ablation();
  if (name == "switch-ablation") return switch_ablation();
  if (name == "offline-throughput") return offline_throughput();
  throw Error(ErrorKind::InvalidArgument, "unknown preset '" + name + "'");
}

/// Workload of a preset at its configured rate.
inline std::vector<Request> workload_of(const ExperimentPreset& p) {
  WorkloadSpec spec = p.workload;
  spec.seed = p.seed;
  if (p.shifted) return generate_shifted(spec, p.shifted->first, p.shifted->second);
  return generate_poisson(spec);
}

}  // namespace epd::presets
