// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "epd/common.hpp"

namespace epd::sim {

enum class EventKind {
  Arrival,
  BatchStart,
  BatchEnd,
  TransferStart,
  TransferEnd,
  DecodeStep,
  RoleSwitchPhase,
  RequestComplete,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "Arrival";
    case EventKind::BatchStart: return "BatchStart";
    case EventKind::BatchEnd: return "BatchEnd";
    case EventKind::TransferStart: return "TransferStart";
    case EventKind::TransferEnd: return "TransferEnd";
    case EventKind::DecodeStep: return "DecodeStep";
    case EventKind::RoleSwitchPhase: return "RoleSwitchPhase";
    case EventKind::RequestComplete: return "RequestComplete";
  }
  return "Unknown";
}

/// Same-time events run completions first, so resources they free are
/// visible to arrivals and controller ticks at that instant.
inline int priority(EventKind k) {
  switch (k) {
    case EventKind::TransferEnd: return 0;
    case EventKind::BatchEnd: return 1;
    case EventKind::DecodeStep: return 2;
    case EventKind::RequestComplete: return 3;
    case EventKind::RoleSwitchPhase: return 4;
    case EventKind::Arrival: return 5;
    case EventKind::BatchStart: return 6;
    case EventKind::TransferStart: return 7;
  }
  return 8;
}

struct SimEvent {
  Seconds time = 0.0;
  EventKind kind = EventKind::Arrival;
  std::uint64_t seq = 0;
  std::uint32_t instance = 0;
  std::uint64_t item = 0;  // request index, shard index, or phase code
  std::uint32_t aux = 0;
};

/// Min-heap on (time, kind priority, insertion sequence).
class EventQueue {
 public:
  void push(SimEvent e) {
    if (e.time < last_popped_)
      throw std::logic_error("event scheduled in the past");
    e.seq = next_seq_++;
    heap_.push(e);
  }

  SimEvent pop() {
    SimEvent e = heap_.top();
    heap_.pop();
    if (e.time < last_popped_) throw std::logic_error("event time went backwards");
    last_popped_ = e.time;
    return e;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  Seconds last_popped() const { return last_popped_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.time != b.time) return a.time > b.time;
      const int pa = priority(a.kind), pb = priority(b.kind);
      if (pa != pb) return pa > pb;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  Seconds last_popped_ = 0.0;
};

}  // namespace epd::sim
