// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "epd/common.hpp"
#include "epd/request.hpp"
#include "epd/role_switch.hpp"
#include "epd/workload.hpp"

namespace epd::sim {

struct ShardRecord {
  std::uint32_t instance = 0;
  std::uint64_t patches = 0;
  Seconds encode_start = 0.0;
  Seconds encode_end = 0.0;
  Seconds transfer_end = 0.0;
};

/// Timeline of one request. Times are only meaningful when `completed`.
struct RequestRecord {
  std::uint64_t id = 0;
  Seconds arrival = 0.0;
  std::uint32_t output_tokens = 1;
  SloLimits slo;
  bool rejected = false;
  bool completed = false;
  std::vector<ShardRecord> shards;
  Seconds ep_transfer_end = 0.0;
  Seconds prefill_start = 0.0;
  Seconds prefill_end = 0.0;
  Seconds pd_transfer_end = 0.0;  // equals prefill_end when no transfer happens
  Seconds first_token = 0.0;
  std::vector<Seconds> token_times;
  Seconds completion = 0.0;
  std::uint32_t prefill_instance = 0;
  std::uint32_t decode_instance = 0;
};

struct InstanceRecord {
  std::uint32_t id = 0;
  StageRole initial_role = StageRole::Encode;
  StageRole final_role = StageRole::Encode;
  Seconds busy_time = 0.0;
};

/// Stage loads in work units (patches, prefill tokens, sequences) plus role counts.
struct QueueSample {
  Seconds time = 0.0;
  std::array<double, 3> stage_load{};
  std::array<std::uint32_t, 3> stage_instances{};
};

struct SimTrace {
  std::uint64_t seed = 0;
  std::vector<RequestRecord> requests;
  std::vector<InstanceRecord> instances;
  std::vector<QueueSample> samples;
  std::vector<SwitchEventRecord> switches;
  std::uint64_t events_processed = 0;
  Seconds makespan = 0.0;  // last completion time
};

inline std::size_t completed_count(const SimTrace& t) {
  return static_cast<std::size_t>(
      std::count_if(t.requests.begin(), t.requests.end(), [](const auto& r) { return r.completed; }));
}

inline std::size_t rejected_count(const SimTrace& t) {
  return static_cast<std::size_t>(
      std::count_if(t.requests.begin(), t.requests.end(), [](const auto& r) { return r.rejected; }));
}

/// Final role counts in (E, P, D) order.
inline std::array<std::uint32_t, 3> final_stage_counts(const SimTrace& t) {
  std::array<std::uint32_t, 3> out{};
  for (const auto& i : t.instances) {
    if (i.final_role == StageRole::Encode) ++out[0];
    if (i.final_role == StageRole::Prefill) ++out[1];
    if (i.final_role == StageRole::Decode) ++out[2];
  }
  return out;
}

/// Line records "request_id,event,time" ordered by (time, request id, record order).
inline void write_event_records(std::ostream& out, const SimTrace& t) {
  struct Line {
    Seconds time;
    std::uint64_t id;
    std::size_t order;
    std::string event;
  };
  std::vector<Line> lines;
  for (const auto& r : t.requests) {
    std::size_t order = 0;
    auto add = [&](const std::string& ev, Seconds time) { lines.push_back({time, r.id, order++, ev}); };
    add("arrival", r.arrival);
    if (r.rejected) {
      add("rejected", r.arrival);
      continue;
    }
    if (!r.completed) continue;
    for (std::size_t s = 0; s < r.shards.size(); ++s) {
      add("encode_start[" + std::to_string(s) + "]", r.shards[s].encode_start);
      add("encode_end[" + std::to_string(s) + "]", r.shards[s].encode_end);
    }
    add("ep_transfer_end", r.ep_transfer_end);
    add("prefill_start", r.prefill_start);
    add("prefill_end", r.prefill_end);
    add("first_token", r.first_token);
    if (r.output_tokens > 1) add("pd_transfer_end", r.pd_transfer_end);
    for (std::size_t k = 1; k < r.token_times.size(); ++k)
      add("token[" + std::to_string(k) + "]", r.token_times[k]);
    add("complete", r.completion);
  }
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return std::tie(a.time, a.id, a.order) < std::tie(b.time, b.id, b.order);
  });
  out << "request_id,event,time\n";
  for (const auto& l : lines) out << l.id << ',' << l.event << ',' << epd::detail::format_double(l.time) << '\n';
}

inline std::string event_records(const SimTrace& t) {
  std::ostringstream ss;
  write_event_records(ss, t);
  return ss.str();
}

inline constexpr std::string_view kSwitchLogHeader =
    "time,instance,source,target,offload_done,migration_done,onload_done,redistributed";

inline void write_switch_log(std::ostream& out, const SimTrace& t) {
  out << kSwitchLogHeader << '\n';
  for (const auto& s : t.switches) {
    out << epd::detail::format_double(s.time) << ',' << s.instance << ',' << to_string(s.source) << ','
        << to_string(s.target) << ',' << epd::detail::format_double(s.offload_done) << ','
        << epd::detail::format_double(s.migration_done) << ',' << epd::detail::format_double(s.onload_done)
        << ',' << s.redistributed << '\n';
  }
}

}  // namespace epd::sim
