// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "epd/common.hpp"
#include "epd/request.hpp"

namespace epd {

/// Size and token geometry of one multimodal model (vision encoder + LLM).
struct ModelSpec {
  std::string name;
  std::uint64_t encoder_params = 0;
  std::uint64_t llm_params = 0;
  std::uint32_t bytes_per_param = 2;
  std::uint32_t num_layers = 0;
  std::uint32_t kv_heads = 0;
  std::uint32_t head_dim = 0;
  std::uint32_t hidden_dim = 0;
  std::uint32_t tokens_per_patch = 0;
  std::map<Resolution, std::uint32_t> patch_table;
  std::uint32_t max_context_tokens = 0;
  // Fixed non-weight memory per role (activation workspace). Empty means none.
  std::map<StageRole, Bytes> role_overhead_bytes;
};

struct HardwareSpec {
  Bytes gpu_memory = 0;
  double intra_node_bandwidth = 0.0;  // bytes / second
  double inter_node_bandwidth = 0.0;  // bytes / second
  std::uint32_t num_gpus = 0;
  std::uint32_t gpus_per_node = 8;
  Seconds channel_setup = 0.0;
};

inline void validate(const ModelSpec& m) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::InvalidArgument, "model '" + m.name + "': " + what);
  };
  if (m.encoder_params == 0 || m.llm_params == 0) fail("parameter counts must be > 0");
  if (m.bytes_per_param == 0) fail("bytes_per_param must be > 0");
  if (m.num_layers == 0 || m.kv_heads == 0 || m.head_dim == 0 || m.hidden_dim == 0)
    fail("layer geometry must be > 0");
  if (m.tokens_per_patch == 0) fail("tokens_per_patch must be > 0");
  if (m.max_context_tokens <= m.tokens_per_patch)
    fail("max_context_tokens must exceed tokens_per_patch");
  for (const auto& [res, patches] : m.patch_table) {
    if (patches < 1) fail("patch_table entry " + to_string(res) + " must be >= 1");
  }
}

inline void validate(const HardwareSpec& hw) {
  if (hw.gpu_memory == 0 || hw.num_gpus == 0 || hw.gpus_per_node == 0 ||
      !(hw.intra_node_bandwidth > 0.0) || !(hw.inter_node_bandwidth > 0.0))
    throw Error(ErrorKind::InvalidArgument, "hardware fields must be positive");
  if (hw.inter_node_bandwidth > hw.intra_node_bandwidth)
    throw Error(ErrorKind::InvalidArgument,
                "inter-node bandwidth must not exceed intra-node bandwidth");
  if (hw.channel_setup < 0.0)
    throw Error(ErrorKind::InvalidArgument, "channel setup must be >= 0");
}

/// Pairs a model with the hardware it is deployed on.
struct MemoryModel {
  ModelSpec model;
  HardwareSpec hardware;
};

inline Bytes weights_bytes(const ModelSpec& m, StageRole role) {
  Bytes params = 0;
  switch (role) {
    case StageRole::Encode: params = m.encoder_params; break;
    case StageRole::Prefill:
    case StageRole::Decode: params = m.llm_params; break;
    case StageRole::EncodePrefill:
    case StageRole::Monolithic: params = m.encoder_params + m.llm_params; break;
  }
  Bytes overhead = 0;
  if (auto it = m.role_overhead_bytes.find(role); it != m.role_overhead_bytes.end())
    overhead = it->second;
  return params * m.bytes_per_param + overhead;
}

/// K and V for every layer and KV head.
inline Bytes kv_bytes_per_token(const ModelSpec& m) {
  return Bytes{2} * m.num_layers * m.kv_heads * m.head_dim * m.bytes_per_param;
}

/// One embedding vector per multimodal token.
inline Bytes mm_bytes_per_token(const ModelSpec& m) {
  return Bytes{m.hidden_dim} * m.bytes_per_param;
}

inline std::uint32_t patches_for_image(const ModelSpec& m, const Resolution& res) {
  auto it = m.patch_table.find(res);
  if (it == m.patch_table.end())
    throw Error(ErrorKind::UnknownResolution,
                "model '" + m.name + "' has no patch count for " + to_string(res));
  return it->second;
}

inline std::uint64_t patches_for_request(const ModelSpec& m, const Request& r) {
  std::uint64_t total = 0;
  for (const auto& res : r.images) total += patches_for_image(m, res);
  return total;
}

struct RequestTokens {
  std::uint64_t mm_tokens = 0;
  std::uint64_t total_prefill_tokens = 0;

  friend bool operator==(const RequestTokens&, const RequestTokens&) = default;
};

inline RequestTokens tokens_for_request(const ModelSpec& m, const Request& r) {
  const std::uint64_t mm = patches_for_request(m, r) * m.tokens_per_patch;
  return {mm, mm + r.prompt_tokens};
}

/// Share of full-model weight memory an Encode-only worker avoids.
inline double encode_weight_reduction(const ModelSpec& m) {
  const double full = static_cast<double>(weights_bytes(m, StageRole::Monolithic));
  return 1.0 - static_cast<double>(weights_bytes(m, StageRole::Encode)) / full;
}

namespace models {

inline const Resolution kSmall{313, 234};
inline const Resolution kMedium{787, 444};
inline const Resolution k4K{4032, 3024};

// Parameter counts per component; layer geometry follows the public configs of
// the language backbones (Qwen2-7B, InternLM2.5-7B, InternLM2-20B).
inline ModelSpec minicpm_v26() {
  ModelSpec m;
  m.name = "MiniCPM-V-2.6";
  m.encoder_params = 400'000'000;
  m.llm_params = 7'600'000'000;
  m.num_layers = 28;
  m.kv_heads = 4;
  m.head_dim = 128;
  m.hidden_dim = 3584;
  m.tokens_per_patch = 64;
  m.patch_table = {{kSmall, 1}, {kMedium, 3}, {k4K, 10}};
  m.max_context_tokens = 32768;
  return m;
}

inline ModelSpec internvl2_8b() {
  ModelSpec m;
  m.name = "InternVL2-8B";
  m.encoder_params = 300'000'000;
  m.llm_params = 7'700'000'000;
  m.num_layers = 32;
  m.kv_heads = 8;
  m.head_dim = 128;
  m.hidden_dim = 4096;
  m.tokens_per_patch = 256;
  m.patch_table = {{kSmall, 13}, {kMedium, 3}, {k4K, 13}};
  m.max_context_tokens = 32768;
  return m;
}

inline ModelSpec internvl2_26b() {
  ModelSpec m;
  m.name = "InternVL2-26B";
  m.encoder_params = 6'000'000'000;
  m.llm_params = 20'000'000'000;
  m.num_layers = 48;
  m.kv_heads = 8;
  m.head_dim = 128;
  m.hidden_dim = 6144;
  m.tokens_per_patch = 256;
  m.patch_table = {{kSmall, 13}, {kMedium, 3}, {k4K, 13}};
  m.max_context_tokens = 32768;
  return m;
}

inline std::vector<ModelSpec> all() { return {minicpm_v26(), internvl2_8b(), internvl2_26b()}; }

inline ModelSpec by_name(const std::string& name) {
  for (auto& m : all())
    if (m.name == name) return m;
  throw Error(ErrorKind::InvalidArgument, "unknown model preset '" + name + "'");
}

/// 8 x 80 GB accelerators in one node.
inline HardwareSpec a100_node() {
  HardwareSpec hw;
  hw.gpu_memory = 80ull * 1'000'000'000ull;
  hw.intra_node_bandwidth = 300e9;
  hw.inter_node_bandwidth = 25e9;
  hw.num_gpus = 8;
  hw.gpus_per_node = 8;
  return hw;
}

}  // namespace models
}  // namespace epd
