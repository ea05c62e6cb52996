// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "epd/common.hpp"
#include "epd/cost_model.hpp"
#include "epd/model_catalog.hpp"
#include "epd/request.hpp"
#include "epd/role_switch.hpp"
#include "epd/sim/block_manager.hpp"
#include "epd/sim/event_queue.hpp"
#include "epd/sim/scheduling.hpp"
#include "epd/sim/system_config.hpp"
#include "epd/sim/trace.hpp"

namespace epd::sim {

namespace engine_detail {

struct WorkItem {
  std::uint32_t req = 0;
  std::uint32_t shard = 0;
};

enum class Phase { Serving, Offloading, Migrating, Onloading };

struct Transfer {
  bool encode_side = true;  // E->P multimodal tokens; otherwise P->D KV cache
  std::uint32_t req = 0;
  std::uint32_t shard = 0;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
};

struct Instance {
  std::uint32_t id = 0;
  InstanceConfig cfg;
  StageRole initial_role = StageRole::Encode;
  std::uint32_t gpu_first = 0;
  Phase phase = Phase::Serving;
  BlockManager mm;
  BlockManager kv;
  bool busy = false;  // running a batch or a decode step, or waiting on inbound transfers
  std::vector<WorkItem> batch;
  std::vector<std::uint32_t> step;  // sequences in the running decode step
  std::uint32_t pending_inbound = 0;
  std::deque<WorkItem> local;
  std::vector<std::uint32_t> running;
  std::vector<std::uint32_t> incoming;  // sequences whose KV is in transit here
  Seconds busy_time = 0.0;
  std::optional<std::size_t> switch_record;
};

struct RequestState {
  std::uint64_t patches = 0;
  std::uint64_t mm_tokens = 0;
  std::uint64_t prefill_tokens = 0;
  std::vector<std::uint64_t> shard_patches;
  std::vector<std::uint32_t> shard_instance;
  std::uint32_t shards_unencoded = 0;
  std::uint32_t shards_in_transit = 0;
  std::uint32_t emitted = 0;
  std::uint32_t kv_holder = 0;
};

inline constexpr std::uint64_t kShardBits = 16;

inline std::uint64_t shard_owner(std::uint32_t req, std::uint32_t shard) {
  return (static_cast<std::uint64_t>(req) << kShardBits) | shard;
}

inline int stage_slot(StageRole r) {
  switch (r) {
    case StageRole::Encode: return 0;
    case StageRole::Prefill: return 1;
    case StageRole::Decode: return 2;
    default: return -1;
  }
}

enum : std::uint64_t { kTick = 0, kMigrationDone = 1, kOnloadDone = 2 };

class Engine {
 public:
  Engine(const SystemConfig& cfg, const std::vector<Request>& workload, std::uint64_t seed)
      : cfg_(cfg), workload_(workload) {
    validate_deployable(cfg_);
    topology_ = classify(cfg_.instances);
    for (std::size_t i = 1; i < workload_.size(); ++i)
      if (workload_[i].arrival < workload_[i - 1].arrival)
        throw Error(ErrorKind::InvalidArgument, "workload must be sorted by arrival");
    if (!workload_.empty() && workload_.front().arrival < 0.0)
      throw Error(ErrorKind::InvalidArgument, "arrival times must be >= 0");
    if (workload_.size() >= (std::uint64_t{1} << 32))
      throw Error(ErrorKind::InvalidArgument, "workload too large");

    std::uint32_t gpu = 0;
    for (std::uint32_t i = 0; i < cfg_.instances.size(); ++i) {
      Instance inst;
      inst.id = i;
      inst.cfg = cfg_.instances[i];
      inst.initial_role = inst.cfg.role;
      inst.gpu_first = gpu;
      gpu += inst.cfg.tp * inst.cfg.pp;
      build_caches(inst);
      policy_.emplace(inst.cfg.role, inst.cfg.policy);
      batch_.emplace(inst.cfg.role, inst.cfg.max_batch);
      instances_.push_back(std::move(inst));
    }
    for (auto r : {StageRole::Encode, StageRole::Prefill, StageRole::Decode}) policy_.emplace(r, SchedulePolicy::FCFS);

    trace_.seed = seed;
    state_.resize(workload_.size());
    trace_.requests.resize(workload_.size());
    for (std::size_t i = 0; i < workload_.size(); ++i) {
      auto& rec = trace_.requests[i];
      rec.id = workload_[i].id;
      rec.arrival = workload_[i].arrival;
      rec.output_tokens = workload_[i].output_tokens;
      rec.slo = workload_[i].slo;
      if (workload_[i].output_tokens < 1)
        throw Error(ErrorKind::InvalidArgument, "output_tokens must be >= 1");
    }
  }

  SimTrace run() {
    for (std::uint32_t i = 0; i < workload_.size(); ++i)
      events_.push({workload_[i].arrival, EventKind::Arrival, 0, 0, i, 0});
    tick_interval_ = controller_active() ? cfg_.role_switch->monitor_interval : cfg_.sample_interval;
    if (tick_interval_ > 0.0 && !workload_.empty())
      events_.push({tick_interval_, EventKind::RoleSwitchPhase, 0, 0, kTick, 0});

    while (!events_.empty()) {
      const SimEvent e = events_.pop();
      now_ = e.time;
      ++trace_.events_processed;
      switch (e.kind) {
        case EventKind::Arrival: on_arrival(static_cast<std::uint32_t>(e.item)); break;
        case EventKind::BatchEnd: on_batch_end(instances_[e.instance]); break;
        case EventKind::DecodeStep: on_decode_step(instances_[e.instance]); break;
        case EventKind::TransferEnd: on_transfer_end(transfers_[e.item]); break;
        case EventKind::RoleSwitchPhase: on_phase(e); break;
        default: break;
      }
    }
    for (const auto& r : trace_.requests)
      if (!r.completed && !r.rejected) throw std::logic_error("simulation stalled with work pending");
    for (const auto& inst : instances_)
      trace_.instances.push_back({inst.id, inst.initial_role, inst.cfg.role, inst.busy_time});
    return std::move(trace_);
  }

 private:
  // ---- setup -------------------------------------------------------------

  void build_caches(Instance& inst) {
    const auto s = cache_sizing(cfg_, inst.cfg.role, inst.cfg.tp, inst.cfg.pp);
    inst.mm = BlockManager(BlockManager::Kind::MM, cfg_.block_size, s.mm_tokens / cfg_.block_size);
    inst.kv = BlockManager(BlockManager::Kind::KV, cfg_.block_size, s.kv_tokens / cfg_.block_size);
  }

  bool controller_active() const {
    return cfg_.role_switch.has_value() && topology_ == Topology::Disaggregated;
  }

  StageRole prefill_role() const {
    switch (topology_) {
      case Topology::Disaggregated: return StageRole::Prefill;
      case Topology::AggregatedEncodePrefill: return StageRole::EncodePrefill;
      case Topology::Monolithic: return StageRole::Monolithic;
    }
    return StageRole::Prefill;
  }

  // ---- queues ------------------------------------------------------------

  bool shared_queue(StageRole role) const { return policy_.at(role) == SchedulePolicy::FCFS; }

  std::deque<WorkItem>& queue_of(Instance& inst) {
    return shared_queue(inst.cfg.role) ? global_[inst.cfg.role] : inst.local;
  }

  double item_load(StageRole role, const WorkItem& w) const {
    if (role == StageRole::Encode) return static_cast<double>(state_[w.req].shard_patches[w.shard]);
    if (role == StageRole::Decode) return 1.0;
    return static_cast<double>(state_[w.req].prefill_tokens);
  }

  double instance_load(const Instance& inst) const {
    const StageRole role = inst.cfg.role;
    double load = 0.0;
    for (const auto& w : inst.local) load += item_load(role, w);
    if (role == StageRole::Decode)
      return load + static_cast<double>(inst.running.size() + inst.incoming.size());
    if (inst.busy)
      for (const auto& w : inst.batch) load += item_load(role, w);
    return load;
  }

  /// Estimated service seconds of one item on `inst`; the controller compares stages in these units.
  Seconds item_seconds(const Instance& inst, const WorkItem& w) const {
    const auto& st = state_[w.req];
    const auto& c = inst.cfg;
    switch (c.role) {
      case StageRole::Encode: return encode_latency(cfg_.cost, st.shard_patches[w.shard], c.tp);
      case StageRole::Prefill: return prefill_latency(cfg_.cost, st.prefill_tokens, c.tp, c.pp);
      case StageRole::Decode: {
        const std::uint64_t left = workload_[w.req].output_tokens - std::max<std::uint32_t>(st.emitted, 1);
        return static_cast<double>(left) * decode_step_latency(cfg_.cost, c.max_batch, 0, c.tp, c.pp) /
               static_cast<double>(c.max_batch);
      }
      default: return 0.0;
    }
  }

  Seconds instance_backlog(const Instance& inst) const {
    Seconds total = 0.0;
    for (const auto& w : inst.local) total += item_seconds(inst, w);
    if (inst.cfg.role == StageRole::Decode) {
      for (auto r : inst.running) total += item_seconds(inst, {r, 0});
      for (auto r : inst.incoming) total += item_seconds(inst, {r, 0});
    } else if (inst.busy) {
      for (const auto& w : inst.batch) total += item_seconds(inst, w);
    }
    return total;
  }

  std::vector<std::uint32_t> serving(StageRole role, std::optional<std::uint32_t> except = {}) const {
    std::vector<std::uint32_t> out;
    for (const auto& inst : instances_)
      if (inst.cfg.role == role && inst.phase == Phase::Serving && inst.id != except) out.push_back(inst.id);
    return out;
  }

  /// Returns false when the stage has no serving instance to take a local item.
  bool enqueue(StageRole role, WorkItem w, std::optional<std::uint32_t> except = {}) {
    if (shared_queue(role)) {
      global_[role].push_back(w);
      return true;
    }
    const auto ids = serving(role, except);
    if (ids.empty()) return false;
    std::vector<double> loads;
    for (auto id : ids) loads.push_back(instance_load(instances_[id]));
    const auto pick = assign_instance(loads, policy_.at(role), rr_cursor_[role]);
    instances_[ids[pick]].local.push_back(w);
    return true;
  }

  // ---- arrivals ----------------------------------------------------------

  bool can_ever_fit(StageRole role, std::uint64_t mm_tokens, std::uint64_t kv_tokens) const {
    for (const auto& inst : instances_) {
      if (inst.cfg.role != role) continue;
      if ((mm_tokens == 0 || inst.mm.could_ever_fit(mm_tokens)) &&
          (kv_tokens == 0 || inst.kv.could_ever_fit(kv_tokens)))
        return true;
    }
    return false;
  }

  bool admissible(std::uint32_t r, const std::vector<std::uint64_t>& shard_tokens) const {
    const auto& st = state_[r];
    const std::uint64_t out = workload_[r].output_tokens;
    if (st.prefill_tokens > cfg_.model.max_context_tokens) return false;
    switch (topology_) {
      case Topology::Disaggregated:
        for (auto t : shard_tokens)
          if (!can_ever_fit(StageRole::Encode, t, 0)) return false;
        if (!can_ever_fit(StageRole::Prefill, st.mm_tokens, st.prefill_tokens)) return false;
        return out == 1 || can_ever_fit(StageRole::Decode, 0, st.prefill_tokens + out);
      case Topology::AggregatedEncodePrefill:
        if (!can_ever_fit(StageRole::EncodePrefill, st.mm_tokens, st.prefill_tokens)) return false;
        return out == 1 || can_ever_fit(StageRole::Decode, 0, st.prefill_tokens + out);
      case Topology::Monolithic:
        return can_ever_fit(StageRole::Monolithic, st.mm_tokens, st.prefill_tokens + out);
    }
    return false;
  }

  void on_arrival(std::uint32_t r) {
    auto& st = state_[r];
    const auto& req = workload_[r];
    st.patches = patches_for_request(cfg_.model, req);
    st.mm_tokens = st.patches * cfg_.model.tokens_per_patch;
    st.prefill_tokens = st.mm_tokens + req.prompt_tokens;
    if (st.prefill_tokens == 0)
      throw Error(ErrorKind::InvalidArgument, "request " + std::to_string(req.id) + " has no tokens");

    std::vector<std::uint64_t> shards;
    if (topology_ == Topology::Disaggregated && st.patches > 0) {
      const auto width = cfg_.irp_enabled
                             ? std::max<std::uint32_t>(1, static_cast<std::uint32_t>(serving(StageRole::Encode).size()))
                             : 1u;
      for (auto s : irp_shard(st.patches, width))
        if (s > 0) shards.push_back(s);
    }
    std::vector<std::uint64_t> shard_tokens;
    for (auto s : shards) shard_tokens.push_back(s * cfg_.model.tokens_per_patch);

    if (!admissible(r, shard_tokens)) {
      if (!cfg_.admission_control)
        throw Error(ErrorKind::CapacityExceeded,
                    "request " + std::to_string(req.id) + " can never fit the configured caches");
      trace_.requests[r].rejected = true;
      ++finished_;
      return;
    }

    if (topology_ == Topology::Disaggregated) {
      st.shard_patches = shards;
      st.shard_instance.assign(shards.size(), 0);
      st.shards_unencoded = static_cast<std::uint32_t>(shards.size());
      trace_.requests[r].shards.resize(shards.size());
      for (std::uint32_t s = 0; s < shards.size(); ++s) {
        trace_.requests[r].shards[s].patches = shards[s];
        enqueue(StageRole::Encode, {r, s});
      }
      if (shards.empty()) enqueue(StageRole::Prefill, {r, 0});
    } else {
      enqueue(prefill_role(), {r, 0});
    }
    dispatch();
  }

  // ---- dispatch ----------------------------------------------------------

  void dispatch() {
    for (auto& inst : instances_) {
      if (inst.phase != Phase::Serving) continue;
      switch (inst.cfg.role) {
        case StageRole::Encode: start_encode(inst); break;
        case StageRole::Prefill:
        case StageRole::EncodePrefill: start_prefill(inst); break;
        case StageRole::Decode: admit_decode(inst); break;
        case StageRole::Monolithic: start_monolithic(inst); break;
      }
    }
  }

  void start_encode(Instance& inst) {
    if (inst.busy) return;
    auto& q = queue_of(inst);
    std::vector<WorkItem> batch;
    while (!q.empty() && batch.size() < inst.cfg.max_batch) {
      const WorkItem w = q.front();
      // One shard per request per batch, so shards of a request can run side by side.
      if (std::any_of(batch.begin(), batch.end(), [&](const WorkItem& b) { return b.req == w.req; })) break;
      const auto tokens = state_[w.req].shard_patches[w.shard] * cfg_.model.tokens_per_patch;
      if (!inst.mm.allocate(shard_owner(w.req, w.shard), tokens)) break;
      batch.push_back(w);
      q.pop_front();
    }
    if (batch.empty()) return;
    std::uint64_t patches = 0;
    for (const auto& w : batch) patches += state_[w.req].shard_patches[w.shard];
    const Seconds lat = encode_latency(cfg_.cost, patches, inst.cfg.tp);
    for (const auto& w : batch) {
      auto& rec = trace_.requests[w.req].shards[w.shard];
      rec.instance = inst.id;
      rec.encode_start = now_;
      rec.encode_end = now_ + lat;
      state_[w.req].shard_instance[w.shard] = inst.id;
    }
    begin_batch(inst, std::move(batch), lat, EventKind::BatchEnd);
  }

  void begin_batch(Instance& inst, std::vector<WorkItem> batch, Seconds lat, EventKind kind) {
    inst.batch = std::move(batch);
    inst.busy = true;
    inst.busy_time += lat;
    events_.push({now_ + lat, kind, 0, inst.id, 0, 0});
  }

  /// Reserves MM and KV blocks for a prefix of the queue; strict FCFS.
  std::vector<WorkItem> take_prefill_batch(Instance& inst, std::size_t limit, bool reserve_output) {
    auto& q = queue_of(inst);
    std::vector<WorkItem> batch;
    while (!q.empty() && batch.size() < limit) {
      const WorkItem w = q.front();
      const auto& st = state_[w.req];
      const std::uint64_t kv_tokens =
          st.prefill_tokens + (reserve_output ? workload_[w.req].output_tokens : 0);
      if (!inst.kv.can_allocate(kv_tokens)) break;
      if (st.mm_tokens > 0 && !inst.mm.can_allocate(st.mm_tokens)) break;
      inst.kv.allocate(w.req, kv_tokens);
      if (st.mm_tokens > 0) inst.mm.allocate(w.req, st.mm_tokens);
      batch.push_back(w);
      q.pop_front();
    }
    return batch;
  }

  void start_prefill(Instance& inst) {
    if (inst.busy) return;
    auto batch = take_prefill_batch(inst, inst.cfg.max_batch, false);
    if (batch.empty()) return;
    if (inst.cfg.role == StageRole::EncodePrefill) {
      run_encode_prefill(inst, std::move(batch));
      return;
    }
    inst.batch = std::move(batch);
    inst.busy = true;
    inst.pending_inbound = 0;
    for (const auto& w : inst.batch) {
      auto& st = state_[w.req];
      trace_.requests[w.req].prefill_instance = inst.id;
      if (st.shard_patches.empty()) trace_.requests[w.req].ep_transfer_end = now_;
      st.shards_in_transit = static_cast<std::uint32_t>(st.shard_patches.size());
      for (std::uint32_t s = 0; s < st.shard_patches.size(); ++s) {
        const Bytes bytes = st.shard_patches[s] * cfg_.model.tokens_per_patch * mm_bytes_per_token(cfg_.model);
        start_transfer({true, w.req, s, st.shard_instance[s], inst.id}, bytes);
        ++inst.pending_inbound;
      }
    }
    if (inst.pending_inbound == 0) start_prefill_compute(inst);
  }

  void start_prefill_compute(Instance& inst) {
    std::vector<std::uint64_t> tokens;
    for (const auto& w : inst.batch) tokens.push_back(state_[w.req].prefill_tokens);
    const Seconds lat = prefill_batch_latency(cfg_.cost, tokens, inst.cfg.tp, inst.cfg.pp);
    for (const auto& w : inst.batch) trace_.requests[w.req].prefill_start = now_;
    inst.busy_time += lat;
    events_.push({now_ + lat, EventKind::BatchEnd, 0, inst.id, 0, 0});
  }

  /// Encode and prefill back to back on one executor; the next batch waits for both.
  void run_encode_prefill(Instance& inst, std::vector<WorkItem> batch) {
    std::uint64_t patches = 0;
    std::vector<std::uint64_t> tokens;
    for (const auto& w : batch) {
      patches += state_[w.req].patches;
      tokens.push_back(state_[w.req].prefill_tokens);
    }
    const Seconds enc = encode_latency(cfg_.cost, patches, inst.cfg.tp);
    const Seconds pre = prefill_batch_latency(cfg_.cost, tokens, inst.cfg.tp, inst.cfg.pp);
    for (const auto& w : batch) {
      auto& rec = trace_.requests[w.req];
      if (state_[w.req].patches > 0)
        rec.shards.push_back({inst.id, state_[w.req].patches, now_, now_ + enc, now_ + enc});
      rec.ep_transfer_end = now_ + enc;
      rec.prefill_start = now_ + enc;
      rec.prefill_instance = inst.id;
    }
    begin_batch(inst, std::move(batch), enc + pre, EventKind::BatchEnd);
  }

  void start_monolithic(Instance& inst) {
    if (inst.busy) return;
    const std::size_t room =
        inst.cfg.max_batch > inst.running.size() ? inst.cfg.max_batch - inst.running.size() : 0;
    auto batch = take_prefill_batch(inst, room, true);
    if (!batch.empty()) {
      run_encode_prefill(inst, std::move(batch));
      return;
    }
    if (!inst.running.empty()) start_step(inst);
  }

  void admit_decode(Instance& inst) {
    auto& q = queue_of(inst);
    while (!q.empty() && inst.running.size() + inst.incoming.size() < inst.cfg.max_batch) {
      const WorkItem w = q.front();
      const auto& st = state_[w.req];
      if (!inst.kv.allocate(w.req, st.prefill_tokens + workload_[w.req].output_tokens)) break;
      q.pop_front();
      inst.incoming.push_back(w.req);
      trace_.requests[w.req].decode_instance = inst.id;
      start_transfer({false, w.req, 0, st.kv_holder, inst.id},
                     st.prefill_tokens * kv_bytes_per_token(cfg_.model));
    }
    if (!inst.busy && !inst.running.empty()) start_step(inst);
  }

  void start_step(Instance& inst) {
    inst.step = inst.running;
    std::uint64_t kv_tokens = 0;
    for (auto r : inst.step) kv_tokens += state_[r].prefill_tokens + state_[r].emitted;
    const Seconds lat = decode_step_latency(cfg_.cost, inst.step.size(), kv_tokens, inst.cfg.tp, inst.cfg.pp);
    inst.busy = true;
    inst.busy_time += lat;
    events_.push({now_ + lat, EventKind::DecodeStep, 0, inst.id, 0, 0});
  }

  // ---- transfers ---------------------------------------------------------

  Channel channel_between(std::uint32_t a, std::uint32_t b) const {
    const auto per_node = cfg_.hardware.gpus_per_node;
    return instances_[a].gpu_first / per_node == instances_[b].gpu_first / per_node ? Channel::Intra
                                                                                    : Channel::Inter;
  }

  void start_transfer(Transfer t, Bytes bytes) {
    Seconds& busy_until = channels_[{t.src, t.dst}];
    const Seconds start = std::max(now_, busy_until);
    const Seconds end = start + transfer_latency(bytes, channel_between(t.src, t.dst), cfg_.hardware);
    busy_until = end;
    transfers_.push_back(t);
    events_.push({end, EventKind::TransferEnd, 0, t.dst, transfers_.size() - 1, 0});
  }

  void on_transfer_end(const Transfer t) {
    auto& st = state_[t.req];
    auto& rec = trace_.requests[t.req];
    auto& src = instances_[t.src];
    auto& dst = instances_[t.dst];
    if (t.encode_side) {
      rec.shards[t.shard].transfer_end = now_;
      src.mm.free(shard_owner(t.req, t.shard));
      if (--st.shards_in_transit == 0) rec.ep_transfer_end = now_;
      if (--dst.pending_inbound == 0) start_prefill_compute(dst);
    } else {
      rec.pd_transfer_end = now_;
      src.kv.free(t.req);
      dst.incoming.erase(std::find(dst.incoming.begin(), dst.incoming.end(), t.req));
      dst.running.push_back(t.req);
    }
    check_offload(src);
    dispatch();
  }

  // ---- completions -------------------------------------------------------

  void complete(std::uint32_t r) {
    auto& rec = trace_.requests[r];
    rec.completed = true;
    rec.completion = now_;
    trace_.makespan = std::max(trace_.makespan, now_);
    ++finished_;
  }

  void on_batch_end(Instance& inst) {
    auto batch = std::move(inst.batch);
    inst.batch.clear();
    inst.busy = false;
    if (inst.cfg.role == StageRole::Encode) {
      for (const auto& w : batch)
        if (--state_[w.req].shards_unencoded == 0) enqueue(StageRole::Prefill, {w.req, 0});
    } else {
      for (const auto& w : batch) {
        auto& st = state_[w.req];
        auto& rec = trace_.requests[w.req];
        rec.prefill_end = now_;
        rec.first_token = now_;
        rec.pd_transfer_end = now_;
        rec.token_times.push_back(now_);
        st.emitted = 1;
        if (st.mm_tokens > 0) inst.mm.free(w.req);
        if (workload_[w.req].output_tokens == 1) {
          inst.kv.free(w.req);
          complete(w.req);
        } else if (inst.cfg.role == StageRole::Monolithic) {
          rec.decode_instance = inst.id;
          inst.running.push_back(w.req);
        } else {
          st.kv_holder = inst.id;
          enqueue(StageRole::Decode, {w.req, 0});
        }
      }
    }
    check_offload(inst);
    dispatch();
  }

  void on_decode_step(Instance& inst) {
    inst.busy = false;
    for (auto r : inst.step) {
      auto& st = state_[r];
      trace_.requests[r].token_times.push_back(now_);
      if (++st.emitted == workload_[r].output_tokens) {
        inst.kv.free(r);
        inst.running.erase(std::find(inst.running.begin(), inst.running.end(), r));
        complete(r);
      }
    }
    inst.step.clear();
    check_offload(inst);
    dispatch();
  }

  // ---- role switching ----------------------------------------------------

  ClusterView view() const {
    ClusterView v;
    v.now = now_;
    v.switch_in_progress = switch_active_;
    v.last_switch_time = last_switch_;
    for (const auto& inst : instances_) {
      const int s = stage_slot(inst.cfg.role);
      if (s < 0 || inst.phase != Phase::Serving) continue;
      const double load = instance_backlog(inst);
      v.instances.push_back({inst.id, inst.cfg.role, load, inst.cfg.pp == 1});
      v.stage_load[s] += load;
    }
    std::array<double, 3> busy{};
    std::array<std::uint32_t, 3> n{};
    const auto& [then, past] = busy_history_.front();
    for (const auto& inst : instances_) {
      const int s = stage_slot(inst.cfg.role);
      if (s < 0 || inst.phase != Phase::Serving) continue;
      busy[s] += inst.busy_time - past[inst.id];
      ++n[s];
    }
    if (now_ > then)
      for (int s = 0; s < 3; ++s)
        if (n[s] > 0) v.stage_utilization[s] = busy[s] / (n[s] * (now_ - then));
    // Shared-queue items are costed on the first serving instance of their stage.
    for (const auto& [role, q] : global_) {
      const int s = stage_slot(role);
      const auto ids = serving(role);
      if (s < 0 || ids.empty()) continue;
      for (const auto& w : q) v.stage_load[s] += item_seconds(instances_[ids.front()], w);
    }
    return v;
  }

  void on_phase(const SimEvent& e) {
    if (e.item == kTick) {
      on_tick();
      return;
    }
    auto& inst = instances_[e.instance];
    auto& rec = trace_.switches[*inst.switch_record];
    if (e.item == kMigrationDone) {
      inst.cfg.role = rec.target;
      // A switched instance keeps its GPUs but adopts the target stage's batch limit.
      inst.cfg.policy = policy_.at(rec.target);
      if (auto b = batch_.find(rec.target); b != batch_.end()) inst.cfg.max_batch = b->second;
      build_caches(inst);
      inst.phase = Phase::Onloading;
      rec.migration_done = now_;
      events_.push({now_ + cfg_.role_switch->onload_latency, EventKind::RoleSwitchPhase, 0, inst.id,
                    kOnloadDone, 0});
    } else {
      inst.phase = Phase::Serving;
      rec.onload_done = now_;
      inst.switch_record.reset();
      switch_active_ = false;
      dispatch();
    }
  }

  void on_tick() {
    std::vector<Seconds> busy;
    for (const auto& inst : instances_) busy.push_back(inst.busy_time);
    if (busy_history_.empty()) busy_history_.push_back({0.0, std::vector<Seconds>(busy.size(), 0.0)});
    const Seconds window = controller_active() ? cfg_.role_switch->utilization_window : tick_interval_;
    while (busy_history_.size() > 1 && busy_history_[1].first <= now_ - window) busy_history_.pop_front();
    const ClusterView v = view();
    busy_history_.push_back({now_, std::move(busy)});
    QueueSample sample;
    sample.time = now_;
    sample.stage_load = v.stage_load;
    for (const auto& inst : instances_) {
      const int s = stage_slot(inst.cfg.role);
      if (s >= 0 && inst.phase == Phase::Serving) ++sample.stage_instances[s];
    }
    trace_.samples.push_back(sample);
    if (controller_active()) {
      if (auto d = monitor_and_decide(v, *cfg_.role_switch)) begin_switch(*d);
    }
    if (finished_ < workload_.size())
      events_.push({now_ + tick_interval_, EventKind::RoleSwitchPhase, 0, 0, kTick, 0});
  }

  void begin_switch(const SwitchDecision& d) {
    auto& inst = instances_[d.instance];
    if (serving(d.source, inst.id).empty()) return;  // no sibling: abort, keep the queue
    SwitchEventRecord rec;
    rec.time = now_;
    rec.instance = inst.id;
    rec.source = d.source;
    rec.target = d.target;
    inst.phase = Phase::Offloading;
    std::deque<WorkItem> queued;
    std::swap(queued, inst.local);
    for (const auto& w : queued) enqueue(d.source, w, inst.id);
    rec.redistributed = static_cast<std::uint32_t>(queued.size());
    trace_.switches.push_back(rec);
    inst.switch_record = trace_.switches.size() - 1;
    switch_active_ = true;
    last_switch_ = now_;
    check_offload(inst);
    dispatch();
  }

  void check_offload(Instance& inst) {
    if (inst.phase != Phase::Offloading) return;
    if (inst.busy || !inst.incoming.empty() || inst.pending_inbound > 0 || !inst.running.empty() ||
        !inst.mm.empty() || !inst.kv.empty())
      return;
    auto& rec = trace_.switches[*inst.switch_record];
    rec.offload_done = now_;
    inst.phase = Phase::Migrating;
    events_.push({now_ + switch_latency(cfg_.cost, rec.source, rec.target), EventKind::RoleSwitchPhase,
                  0, inst.id, kMigrationDone, 0});
  }

  const SystemConfig& cfg_;
  const std::vector<Request>& workload_;
  Topology topology_ = Topology::Disaggregated;
  std::vector<Instance> instances_;
  std::vector<RequestState> state_;
  std::map<StageRole, SchedulePolicy> policy_;
  std::map<StageRole, std::uint32_t> batch_;
  std::map<StageRole, std::deque<WorkItem>> global_;
  std::map<StageRole, std::uint64_t> rr_cursor_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, Seconds> channels_;
  std::vector<Transfer> transfers_;
  EventQueue events_;
  SimTrace trace_;
  Seconds now_ = 0.0;
  Seconds tick_interval_ = 0.0;
  std::size_t finished_ = 0;
  bool switch_active_ = false;
  std::optional<Seconds> last_switch_;
  // (time, busy seconds per instance) snapshots covering the utilization window.
  std::deque<std::pair<Seconds, std::vector<Seconds>>> busy_history_;
};

}  // namespace engine_detail

/// Runs `workload` (sorted by arrival) through `config`. The run is fully
/// deterministic; `seed` is recorded in the trace for provenance.
inline SimTrace run_simulation(const SystemConfig& config, const std::vector<Request>& workload,
                               std::uint64_t seed = 0) {
  engine_detail::Engine engine(config, workload, seed);
  return engine.run();
}

}  // namespace epd::sim
