// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "epd/role_switch.hpp"
#include "support.hpp"

namespace epd {
namespace {

// 2E 1P 2D, ids 0..4.
ClusterView cluster(double e, double p, double d) {
  ClusterView v;
  v.now = 10.0;
  v.instances = {{0, StageRole::Encode, e / 2}, {1, StageRole::Encode, e / 2}, {2, StageRole::Prefill, p},
                 {3, StageRole::Decode, d / 2}, {4, StageRole::Decode, d / 2}};
  v.stage_load = {e, p, d};
  return v;
}

TEST(MonitorAndDecide, BalancedDoesNothing) {
  EXPECT_FALSE(monitor_and_decide(cluster(2, 1, 2), {}));
  EXPECT_FALSE(monitor_and_decide(cluster(0, 0, 0), {}));
}

TEST(MonitorAndDecide, IdleEncodeFeedsLoadedDecode) {
  auto v = cluster(0, 0, 40);
  v.instances[1].load = 0.0;
  v.instances[0].load = 0.0;
  const auto d = monitor_and_decide(v, {});
  ASSERT_TRUE(d);
  EXPECT_EQ(*d, (SwitchDecision{0, StageRole::Encode, StageRole::Decode}));
}

TEST(MonitorAndDecide, PicksLeastLoadedSourceInstance) {
  auto v = cluster(1, 0, 40);
  v.instances[0].load = 0.8;
  v.instances[1].load = 0.2;
  const auto d = monitor_and_decide(v, {});
  ASSERT_TRUE(d);
  EXPECT_EQ(d->instance, 1u);
}

TEST(MonitorAndDecide, ThresholdIsStrict) {
  ControllerParams p;
  p.smoothing = 0.0;
  p.imbalance_threshold = 4.0;
  // Per-instance loads: E 1, D 4 -> ratio exactly 4.
  auto v = cluster(2, 0.5, 8);
  EXPECT_FALSE(monitor_and_decide(v, p));
  v.stage_load[2] = 8.01;
  EXPECT_TRUE(monitor_and_decide(v, p));
}

TEST(MonitorAndDecide, SourceAtMinimumKept) {
  // Prefill has one instance, so it is never a source.
  auto v = cluster(40, 0, 40);
  EXPECT_FALSE(monitor_and_decide(v, {}));
  ControllerParams p;
  p.min_instances_per_stage = 2;
  EXPECT_FALSE(monitor_and_decide(cluster(0, 0, 40), p));
}

TEST(MonitorAndDecide, CooldownAndInFlightSwitch) {
  auto v = cluster(0, 0, 40);
  v.last_switch_time = 9.0;
  EXPECT_FALSE(monitor_and_decide(v, {}));
  v.last_switch_time = 8.0;
  EXPECT_TRUE(monitor_and_decide(v, {}));
  v.switch_in_progress = true;
  EXPECT_FALSE(monitor_and_decide(v, {}));
}

TEST(MonitorAndDecide, UtilizationGuard) {
  auto v = cluster(0, 0, 40);
  // Two busy encoders at 0.5 would become one at 1.0.
  v.stage_utilization = {0.5, 0, 1};
  EXPECT_FALSE(monitor_and_decide(v, {}));
  v.stage_utilization = {0.45, 0, 1};
  EXPECT_TRUE(monitor_and_decide(v, {}));
}

TEST(MonitorAndDecide, TiesBrokenByLowestId) {
  auto v = cluster(0, 0, 40);
  std::swap(v.instances[0], v.instances[1]);
  EXPECT_EQ(monitor_and_decide(v, {})->instance, 0u);
}

TEST(MonitorAndDecide, PipelineInstancesNeverBecomeEncoders) {
  auto v = cluster(40, 0, 0);
  v.instances[3].can_encode = false;
  v.instances[3].load = 0.0;
  v.instances[4].load = 0.0;
  const auto d = monitor_and_decide(v, {});
  ASSERT_TRUE(d);
  EXPECT_EQ(d->instance, 4u);
  EXPECT_EQ(d->target, StageRole::Encode);
  v.instances[4].can_encode = false;
  EXPECT_FALSE(monitor_and_decide(v, {}));
}

TEST(MonitorAndDecide, EmptyStageDoesNothing) {
  auto v = cluster(0, 0, 40);
  v.instances.erase(v.instances.begin() + 2);
  EXPECT_FALSE(monitor_and_decide(v, {}));
}

TEST(MonitorAndDecide, RandomViewsSatisfyInvariants) {
  testing::Gen g(77);
  int decided = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    ClusterView v;
    v.now = g.real(0, 100);
    std::array<std::uint32_t, 3> count{};
    std::uint32_t id = 0;
    for (int s = 0; s < 3; ++s) {
      count[s] = static_cast<std::uint32_t>(g.uint(1, 4));
      for (std::uint32_t k = 0; k < count[s]; ++k) {
        const double l = g.chance(0.3) ? 0.0 : g.real(0, 20);
        v.instances.push_back({id++, switch_detail::kStages[s], l, g.chance(0.8)});
        v.stage_load[s] += l;
      }
      v.stage_utilization[s] = g.real(0, 1);
    }
    ControllerParams p;
    p.imbalance_threshold = g.real(1.1, 5);
    const auto d = monitor_and_decide(v, p);
    if (!d) continue;
    ++decided;
    const int src = switch_detail::stage_index(d->source), dst = switch_detail::stage_index(d->target);
    ASSERT_NE(src, dst);
    EXPECT_GT(count[src], p.min_instances_per_stage);
    EXPECT_LE(v.stage_utilization[src] * count[src] / (count[src] - 1), p.max_source_utilization);
    const double a_src = v.stage_load[src] / count[src], a_dst = v.stage_load[dst] / count[dst];
    for (int s = 0; s < 3; ++s) EXPECT_GE(a_dst, v.stage_load[s] / count[s]);
    EXPECT_GT((a_dst + p.smoothing) / (a_src + p.smoothing), p.imbalance_threshold);
    const InstanceLoad* chosen = nullptr;
    for (const auto& i : v.instances)
      if (i.id == d->instance) chosen = &i;
    ASSERT_NE(chosen, nullptr);
    EXPECT_EQ(chosen->role, d->source);
    if (d->target == StageRole::Encode) { EXPECT_TRUE(chosen->can_encode); }
    for (const auto& i : v.instances)
      if (i.role == d->source && (d->target != StageRole::Encode || i.can_encode)) {
        EXPECT_LE(chosen->load, i.load);
      }
  }
  EXPECT_GT(decided, 100);
}

TEST(SwitchLatency, EncodeCostsMore) {
  CostParams c;
  c.switch_latency_e = 0.7;
  c.switch_latency_pd = 0.2;
  EXPECT_EQ(switch_latency(c, StageRole::Encode, StageRole::Decode), 0.7);
  EXPECT_EQ(switch_latency(c, StageRole::Prefill, StageRole::Encode), 0.7);
  EXPECT_EQ(switch_latency(c, StageRole::Prefill, StageRole::Decode), 0.2);
  EXPECT_EQ(switch_latency(c, StageRole::Decode, StageRole::Prefill), 0.2);
}

TEST(ControllerParams, Validate) {
  ControllerParams p;
  EXPECT_NO_THROW(validate(p));
  p.imbalance_threshold = 1.0;
  EXPECT_THROW(validate(p), Error);
  p = {};
  p.monitor_interval = 0;
  EXPECT_THROW(validate(p), Error);
  p = {};
  p.min_instances_per_stage = 0;
  EXPECT_THROW(validate(p), Error);
  p = {};
  p.onload_latency = 0;
  EXPECT_THROW(validate(p), Error);
}

}  // namespace
}  // namespace epd
