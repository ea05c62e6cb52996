// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "epd/common.hpp"
#include "epd/cost_model.hpp"
#include "epd/model_catalog.hpp"
#include "epd/optimizer.hpp"
#include "epd/presets.hpp"
#include "epd/role_switch.hpp"
#include "epd/sim/system_config.hpp"
#include "epd/workload.hpp"

// JSON documents for every configurable input. Missing keys take the struct
// defaults; unknown keys are a ParseError so typos do not pass silently.

namespace epd {

using Json = nlohmann::json;

namespace io_detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorKind::ParseError, "unknown key '" + key + "' in " + std::string(what));
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace io_detail

// ---- enums ---------------------------------------------------------------

inline void to_json(Json& j, StageRole r) { j = std::string(to_string(r)); }
inline void from_json(const Json& j, StageRole& r) { r = parse_stage_role(j.get<std::string>()); }
inline void to_json(Json& j, SchedulePolicy p) { j = std::string(to_string(p)); }
inline void from_json(const Json& j, SchedulePolicy& p) { p = parse_schedule_policy(j.get<std::string>()); }

inline void to_json(Json& j, BudgetMode m) { j = m == BudgetMode::Exactly ? "exactly" : "at_most"; }
inline void from_json(const Json& j, BudgetMode& m) {
  const auto s = j.get<std::string>();
  if (s == "exactly") m = BudgetMode::Exactly;
  else if (s == "at_most") m = BudgetMode::AtMost;
  else throw Error(ErrorKind::ParseError, "budget_mode must be 'exactly' or 'at_most'");
}

// ---- model and hardware --------------------------------------------------

inline void to_json(Json& j, const Resolution& r) { j = to_string(r); }
inline void from_json(const Json& j, Resolution& r) {
  const auto s = j.get<std::string>();
  const auto x = s.find('x');
  if (x == std::string::npos) throw Error(ErrorKind::ParseError, "resolution '" + s + "' is not WxH");
  r.width = detail::parse_field<std::uint32_t>(s.substr(0, x), 0, "width");
  r.height = detail::parse_field<std::uint32_t>(s.substr(x + 1), 0, "height");
}

inline void to_json(Json& j, const ModelSpec& m) {
  Json patches = Json::object();
  for (const auto& [res, n] : m.patch_table) patches[to_string(res)] = n;
  Json overhead = Json::object();
  for (const auto& [role, b] : m.role_overhead_bytes) overhead[std::string(to_string(role))] = b;
  j = {{"name", m.name},
       {"encoder_params", m.encoder_params},
       {"llm_params", m.llm_params},
       {"bytes_per_param", m.bytes_per_param},
       {"num_layers", m.num_layers},
       {"kv_heads", m.kv_heads},
       {"head_dim", m.head_dim},
       {"hidden_dim", m.hidden_dim},
       {"tokens_per_patch", m.tokens_per_patch},
       {"patch_table", patches},
       {"max_context_tokens", m.max_context_tokens},
       {"role_overhead_bytes", overhead}};
}

inline void from_json(const Json& j, ModelSpec& m) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"name", "encoder_params", "llm_params", "bytes_per_param", "num_layers", "kv_heads",
                         "head_dim", "hidden_dim", "tokens_per_patch", "patch_table", "max_context_tokens",
                         "role_overhead_bytes"},
                        "model");
  read(j, "name", m.name);
  read(j, "encoder_params", m.encoder_params);
  read(j, "llm_params", m.llm_params);
  read(j, "bytes_per_param", m.bytes_per_param);
  read(j, "num_layers", m.num_layers);
  read(j, "kv_heads", m.kv_heads);
  read(j, "head_dim", m.head_dim);
  read(j, "hidden_dim", m.hidden_dim);
  read(j, "tokens_per_patch", m.tokens_per_patch);
  read(j, "max_context_tokens", m.max_context_tokens);
  if (j.contains("patch_table")) {
    m.patch_table.clear();
    for (const auto& [k, v] : j.at("patch_table").items()) m.patch_table[Json(k).get<Resolution>()] = v.get<std::uint32_t>();
  }
  if (j.contains("role_overhead_bytes")) {
    m.role_overhead_bytes.clear();
    for (const auto& [k, v] : j.at("role_overhead_bytes").items())
      m.role_overhead_bytes[parse_stage_role(k)] = v.get<Bytes>();
  }
}

inline void to_json(Json& j, const HardwareSpec& h) {
  j = {{"gpu_memory", h.gpu_memory},
       {"intra_node_bandwidth", h.intra_node_bandwidth},
       {"inter_node_bandwidth", h.inter_node_bandwidth},
       {"num_gpus", h.num_gpus},
       {"gpus_per_node", h.gpus_per_node},
       {"channel_setup", h.channel_setup}};
}

inline void from_json(const Json& j, HardwareSpec& h) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"gpu_memory", "intra_node_bandwidth", "inter_node_bandwidth", "num_gpus",
                         "gpus_per_node", "channel_setup"},
                        "hardware");
  read(j, "gpu_memory", h.gpu_memory);
  read(j, "intra_node_bandwidth", h.intra_node_bandwidth);
  read(j, "inter_node_bandwidth", h.inter_node_bandwidth);
  read(j, "num_gpus", h.num_gpus);
  read(j, "gpus_per_node", h.gpus_per_node);
  read(j, "channel_setup", h.channel_setup);
}

inline void to_json(Json& j, const CostParams& c) {
  j = {{"enc_base", c.enc_base},
       {"enc_per_patch", c.enc_per_patch},
       {"prefill_base", c.prefill_base},
       {"prefill_per_token", c.prefill_per_token},
       {"prefill_quad", c.prefill_quad},
       {"decode_base", c.decode_base},
       {"decode_per_seq", c.decode_per_seq},
       {"decode_per_kv_token", c.decode_per_kv_token},
       {"tp_efficiency", c.tp_efficiency},
       {"pp_fill_penalty", c.pp_fill_penalty},
       {"switch_latency_e", c.switch_latency_e},
       {"switch_latency_pd", c.switch_latency_pd},
       {"encode_heaviness", c.encode_heaviness}};
}

inline void from_json(const Json& j, CostParams& c) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"enc_base", "enc_per_patch", "prefill_base", "prefill_per_token", "prefill_quad",
                         "decode_base", "decode_per_seq", "decode_per_kv_token", "tp_efficiency",
                         "pp_fill_penalty", "switch_latency_e", "switch_latency_pd", "encode_heaviness"},
                        "cost");
  read(j, "enc_base", c.enc_base);
  read(j, "enc_per_patch", c.enc_per_patch);
  read(j, "prefill_base", c.prefill_base);
  read(j, "prefill_per_token", c.prefill_per_token);
  read(j, "prefill_quad", c.prefill_quad);
  read(j, "decode_base", c.decode_base);
  read(j, "decode_per_seq", c.decode_per_seq);
  read(j, "decode_per_kv_token", c.decode_per_kv_token);
  read(j, "tp_efficiency", c.tp_efficiency);
  read(j, "pp_fill_penalty", c.pp_fill_penalty);
  read(j, "switch_latency_e", c.switch_latency_e);
  read(j, "switch_latency_pd", c.switch_latency_pd);
  read(j, "encode_heaviness", c.encode_heaviness);
}

// ---- controller, instances, system ---------------------------------------

inline void to_json(Json& j, const ControllerParams& p) {
  j = {{"monitor_interval", p.monitor_interval},
       {"imbalance_threshold", p.imbalance_threshold},
       {"smoothing", p.smoothing},
       {"min_instances_per_stage", p.min_instances_per_stage},
       {"cooldown", p.cooldown},
       {"onload_latency", p.onload_latency},
       {"max_source_utilization", p.max_source_utilization},
       {"utilization_window", p.utilization_window}};
}

inline void from_json(const Json& j, ControllerParams& p) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"monitor_interval", "imbalance_threshold", "smoothing", "min_instances_per_stage",
                         "cooldown", "onload_latency", "max_source_utilization", "utilization_window"},
                        "role_switch");
  read(j, "monitor_interval", p.monitor_interval);
  read(j, "imbalance_threshold", p.imbalance_threshold);
  read(j, "smoothing", p.smoothing);
  read(j, "min_instances_per_stage", p.min_instances_per_stage);
  read(j, "cooldown", p.cooldown);
  read(j, "onload_latency", p.onload_latency);
  read(j, "max_source_utilization", p.max_source_utilization);
  read(j, "utilization_window", p.utilization_window);
}

inline void to_json(Json& j, const InstanceConfig& i) {
  j = {{"role", i.role}, {"tp", i.tp}, {"pp", i.pp}, {"max_batch", i.max_batch}, {"policy", i.policy}};
}

inline void from_json(const Json& j, InstanceConfig& i) {
  using io_detail::read;
  io_detail::check_keys(j, {"role", "tp", "pp", "max_batch", "policy"}, "instance");
  read(j, "role", i.role);
  read(j, "tp", i.tp);
  read(j, "pp", i.pp);
  read(j, "max_batch", i.max_batch);
  read(j, "policy", i.policy);
}

inline void to_json(Json& j, const SystemConfig& c) {
  j = {{"instances", c.instances},
       {"hardware", c.hardware},
       {"model", c.model},
       {"cost", c.cost},
       {"irp_enabled", c.irp_enabled},
       {"kv_fraction", c.kv_fraction},
       {"mm_cache_tokens", c.mm_cache_tokens},
       {"block_size", c.block_size},
       {"admission_control", c.admission_control},
       {"sample_interval", c.sample_interval}};
  j["role_switch"] = c.role_switch ? Json(*c.role_switch) : Json(nullptr);
}

/// Accepts either a full document or a compact one: "model" may be a catalog
/// name, "instances" may be replaced by "shorthand" plus per-role "templates",
/// and a missing "cost" falls back to the synthetic calibration of the model.
inline void from_json(const Json& j, SystemConfig& c) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"instances", "shorthand", "templates", "hardware", "model", "cost", "role_switch",
                         "irp_enabled", "kv_fraction", "mm_cache_tokens", "block_size", "admission_control",
                         "sample_interval"},
                        "system config");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model = m.is_string() ? models::by_name(m.get<std::string>()) : m.get<ModelSpec>();
    c.cost = presets::synthetic_cost(c.model.name);
    c.mm_cache_tokens = c.model.max_context_tokens;
  }
  // A partial "hardware" object overrides fields of the default node.
  if (c.hardware.num_gpus == 0) c.hardware = models::a100_node();
  read(j, "hardware", c.hardware);
  read(j, "cost", c.cost);
  if (j.contains("instances") && j.contains("shorthand"))
    throw Error(ErrorKind::ParseError, "give either 'instances' or 'shorthand', not both");
  read(j, "instances", c.instances);
  if (j.contains("shorthand")) {
    std::map<StageRole, InstanceConfig> templates;
    if (j.contains("templates"))
      for (const auto& [k, v] : j.at("templates").items()) {
        auto t = v.get<InstanceConfig>();
        t.role = parse_stage_role(k);
        templates[t.role] = t;
      }
    c.instances = expand_shorthand(j.at("shorthand").get<std::string>(), templates);
  }
  if (j.contains("role_switch")) {
    const auto& r = j.at("role_switch");
    if (r.is_null()) c.role_switch.reset();
    else c.role_switch = r.get<ControllerParams>();
  }
  read(j, "irp_enabled", c.irp_enabled);
  read(j, "kv_fraction", c.kv_fraction);
  read(j, "mm_cache_tokens", c.mm_cache_tokens);
  read(j, "block_size", c.block_size);
  read(j, "admission_control", c.admission_control);
  read(j, "sample_interval", c.sample_interval);
}

// ---- workload and optimizer space ----------------------------------------

inline void to_json(Json& j, const SloLimits& s) { j = {{"ttft", s.ttft}, {"tpot", s.tpot}}; }
inline void from_json(const Json& j, SloLimits& s) {
  io_detail::check_keys(j, {"ttft", "tpot"}, "slo");
  io_detail::read(j, "ttft", s.ttft);
  io_detail::read(j, "tpot", s.tpot);
}

inline void to_json(Json& j, const WorkloadSpec& w) {
  j = {{"rate", w.rate},
       {"num_requests", w.num_requests},
       {"prompt_tokens", w.prompt_tokens},
       {"images_per_request", w.images_per_request},
       {"resolution", w.resolution},
       {"output_tokens", w.output_tokens},
       {"seed", w.seed},
       {"slo", w.slo}};
}

inline void from_json(const Json& j, WorkloadSpec& w) {
  using io_detail::read;
  io_detail::check_keys(j,
                        {"rate", "num_requests", "prompt_tokens", "images_per_request", "resolution",
                         "output_tokens", "seed", "slo"},
                        "workload");
  read(j, "rate", w.rate);
  read(j, "num_requests", w.num_requests);
  read(j, "prompt_tokens", w.prompt_tokens);
  read(j, "images_per_request", w.images_per_request);
  read(j, "resolution", w.resolution);
  read(j, "output_tokens", w.output_tokens);
  read(j, "seed", w.seed);
  read(j, "slo", w.slo);
}

inline void to_json(Json& j, const StageRange& r) {
  j = {{"counts", r.counts}, {"tp", r.tp}, {"pp", r.pp}, {"batch", r.batch}};
}
inline void from_json(const Json& j, StageRange& r) {
  using io_detail::read;
  io_detail::check_keys(j, {"counts", "tp", "pp", "batch"}, "stage range");
  read(j, "counts", r.counts);
  read(j, "tp", r.tp);
  read(j, "pp", r.pp);
  read(j, "batch", r.batch);
}

inline void to_json(Json& j, const ConfigSpace& s) {
  j = {{"gpu_budget", s.gpu_budget}, {"budget_mode", s.budget_mode}, {"encode", s.encode},
       {"prefill", s.prefill},       {"decode", s.decode},           {"policies", s.policies},
       {"irp", s.irp}};
}
inline void from_json(const Json& j, ConfigSpace& s) {
  using io_detail::read;
  io_detail::check_keys(j, {"gpu_budget", "budget_mode", "encode", "prefill", "decode", "policies", "irp"},
                        "config space");
  read(j, "gpu_budget", s.gpu_budget);
  read(j, "budget_mode", s.budget_mode);
  read(j, "encode", s.encode);
  read(j, "prefill", s.prefill);
  read(j, "decode", s.decode);
  read(j, "policies", s.policies);
  read(j, "irp", s.irp);
}

// ---- files and hashing ---------------------------------------------------

inline Json parse_json(std::string_view text, std::string_view what = "document") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string(what) + ": " + e.what());
  }
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

/// Converts after parsing; nlohmann type errors surface as ParseError.
template <typename T>
T from_document(const Json& j, std::string_view what = "document") {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string(what) + ": " + e.what());
  }
}

template <typename T>
T load(const std::string& path) {
  return from_document<T>(load_json(path), path);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical (key-sorted, compact) serialization, as 16 hex digits.
inline std::string config_hash(const Json& j) {
  const auto h = fnv1a(j.dump());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = kHex[(h >> (4 * i)) & 0xf];
  return out;
}

}  // namespace epd
