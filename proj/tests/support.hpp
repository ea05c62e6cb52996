// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures: hand-rolled random generators and trace invariant checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "epd/presets.hpp"
#include "epd/sim/engine.hpp"

namespace epd::testing {

/// Small wrapper over mt19937_64 so generators read as intent.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t uint(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool chance(double p) { return real(0.0, 1.0) < p; }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[uint(0, v.size() - 1)];
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Kolmogorov-Smirnov distance between the sample and Exp(rate).
inline double ks_exponential(std::vector<double> gaps, double rate) {
  std::sort(gaps.begin(), gaps.end());
  const double n = static_cast<double>(gaps.size());
  double d = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * gaps[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value at alpha = 0.01.
inline double ks_critical_001(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline std::vector<double> gaps_of(const std::vector<Request>& w) {
  std::vector<double> out;
  Seconds prev = 0.0;
  for (const auto& r : w) {
    out.push_back(r.arrival - prev);
    prev = r.arrival;
  }
  return out;
}

/// Random deployable system on one 8-GPU node: any of the three topologies,
/// random batch limits, policies, IRP, and (for E/P/D) maybe a controller.
inline SystemConfig random_system(Gen& g) {
  const std::vector<ModelSpec> ms = {models::minicpm_v26(), models::internvl2_8b()};
  SystemConfig cfg = presets::base_system(g.pick(ms), "1E1P1D");
  const int topo = static_cast<int>(g.uint(0, 2));
  const SchedulePolicy pol = g.pick(std::vector<SchedulePolicy>{
      SchedulePolicy::FCFS, SchedulePolicy::RoundRobinAssign, SchedulePolicy::LeastLoadedAssign});
  auto inst = [&](StageRole r, std::uint32_t batch) {
    InstanceConfig i;
    i.role = r;
    i.max_batch = batch;
    i.policy = pol;
    return i;
  };
  cfg.instances.clear();
  if (topo == 0) {
    const auto e = g.uint(1, 5), p = g.uint(1, 7 - e), d = g.uint(1, 8 - e - p);
    const auto eb = static_cast<std::uint32_t>(g.uint(1, 4)), pb = static_cast<std::uint32_t>(g.uint(1, 4)),
               db = static_cast<std::uint32_t>(g.uint(1, 32));
    for (std::uint64_t k = 0; k < e; ++k) cfg.instances.push_back(inst(StageRole::Encode, eb));
    for (std::uint64_t k = 0; k < p; ++k) cfg.instances.push_back(inst(StageRole::Prefill, pb));
    for (std::uint64_t k = 0; k < d; ++k) cfg.instances.push_back(inst(StageRole::Decode, db));
    cfg.irp_enabled = g.chance(0.5);
    if (g.chance(0.3)) {
      ControllerParams c;
      c.cooldown = g.real(0.0, 3.0);
      c.imbalance_threshold = g.real(1.5, 4.0);
      cfg.role_switch = c;
    }
  } else if (topo == 1) {
    const auto ep = g.uint(1, 7), d = g.uint(1, 8 - ep);
    const auto pb = static_cast<std::uint32_t>(g.uint(1, 4)), db = static_cast<std::uint32_t>(g.uint(1, 32));
    for (std::uint64_t k = 0; k < ep; ++k) cfg.instances.push_back(inst(StageRole::EncodePrefill, pb));
    for (std::uint64_t k = 0; k < d; ++k) cfg.instances.push_back(inst(StageRole::Decode, db));
  } else {
    const auto m = g.uint(1, 8);
    const auto mb = static_cast<std::uint32_t>(g.uint(1, 32));
    for (std::uint64_t k = 0; k < m; ++k) cfg.instances.push_back(inst(StageRole::Monolithic, mb));
  }
  return cfg;
}

/// Poisson-ish arrivals with mixed image counts, resolutions and lengths.
inline std::vector<Request> random_workload(Gen& g, const ModelSpec& m, std::size_t n) {
  std::vector<Resolution> res;
  for (const auto& [r, _] : m.patch_table) res.push_back(r);
  std::vector<Request> out;
  Seconds clock = 0.0;
  const double rate = g.real(0.5, 6.0);
  for (std::size_t i = 0; i < n; ++i) {
    clock += -std::log1p(-g.real(0.0, 1.0)) / rate;
    Request r;
    r.id = i;
    r.arrival = clock;
    r.prompt_tokens = static_cast<std::uint32_t>(g.uint(1, 64));
    r.images.assign(g.uint(0, 4), g.pick(res));
    r.output_tokens = static_cast<std::uint32_t>(g.uint(1, 40));
    r.slo = {2.0, 0.05};
    out.push_back(r);
  }
  return out;
}

/// Returns an empty string when every causality and conservation rule holds,
/// otherwise a description of the first violation.
inline std::string check_trace(const sim::SimTrace& t, const std::vector<Request>& w) {
  if (t.requests.size() != w.size()) return "request count changed";
  std::size_t done = 0, rejected = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& r = t.requests[i];
    const std::string id = "request " + std::to_string(r.id) + ": ";
    if (r.id != w[i].id) return id + "id mismatch";
    if (r.completed && r.rejected) return id + "both completed and rejected";
    if (!r.completed && !r.rejected) return id + "neither completed nor rejected";
    if (r.rejected) {
      ++rejected;
      continue;
    }
    ++done;
    Seconds enc_done = r.arrival;
    for (const auto& s : r.shards) {
      if (s.encode_start < r.arrival) return id + "encode before arrival";
      if (s.encode_end < s.encode_start) return id + "encode ends before it starts";
      if (s.transfer_end < s.encode_end) return id + "transfer ends before encode";
      enc_done = std::max(enc_done, s.transfer_end);
    }
    if (r.ep_transfer_end < enc_done) return id + "prefill input ready before shards arrive";
    if (r.prefill_start < r.ep_transfer_end) return id + "prefill before its input";
    if (r.prefill_end < r.prefill_start) return id + "prefill ends before it starts";
    if (r.first_token != r.prefill_end) return id + "first token not at prefill end";
    if (r.token_times.size() != w[i].output_tokens) return id + "wrong token count";
    if (r.token_times.front() != r.first_token) return id + "first token time mismatch";
    for (std::size_t k = 1; k < r.token_times.size(); ++k)
      if (r.token_times[k] <= r.token_times[k - 1]) return id + "tokens not strictly increasing";
    if (w[i].output_tokens > 1 && r.token_times[1] < r.pd_transfer_end) return id + "decode before KV arrived";
    if (r.completion != r.token_times.back()) return id + "completion is not the last token";
  }
  if (done + rejected != w.size()) return "conservation broken";
  return "";
}

}  // namespace epd::testing
