// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "epd/io.hpp"
#include "support.hpp"

namespace epd {
namespace {

template <typename T>
void expect_round_trip(const T& value) {
  const Json j = value;
  const auto back = from_document<T>(parse_json(j.dump()));
  EXPECT_EQ(Json(back), j) << j.dump();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no epd::Error thrown";
  return ErrorKind::InvalidArgument;
}

TEST(Json, RoundTripsPresets) {
  for (const auto& m : models::all()) expect_round_trip(m);
  expect_round_trip(models::a100_node());
  expect_round_trip(presets::synthetic_cost("InternVL2-8B"));
  expect_round_trip(ControllerParams{});
  expect_round_trip(presets::restricted_space());
  for (const auto& name : presets::names()) {
    const auto p = presets::by_name(name);
    expect_round_trip(p.workload);
    for (const auto& s : p.systems) expect_round_trip(s.config);
  }
}

TEST(Json, RoundTripsRandomSystems) {
  testing::Gen g(31);
  for (int trial = 0; trial < 50; ++trial) expect_round_trip(testing::random_system(g));
}

TEST(Json, UnknownKeyIsParseError) {
  EXPECT_EQ(kind_of([] { from_document<SystemConfig>(parse_json(R"({"model":"MiniCPM-V-2.6","shorthnd":"1E1P1D"})")); }),
            ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { from_document<WorkloadSpec>(parse_json(R"({"rate":1,"slo":{"ttft":1,"tbt":2}})")); }),
            ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { from_document<ConfigSpace>(parse_json(R"({"budget":8})")); }), ErrorKind::ParseError);
}

TEST(Json, MalformedAndMistypedAreParseErrors) {
  EXPECT_EQ(kind_of([] { parse_json("{\"rate\": "); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { from_document<WorkloadSpec>(parse_json(R"({"rate":"fast"})")); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { from_document<SystemConfig>(parse_json(R"({"model":"Nope-7B"})")); }),
            ErrorKind::InvalidArgument);
}

TEST(Json, CompactSystemDocument) {
  const auto cfg = from_document<SystemConfig>(parse_json(R"({
    "model": "MiniCPM-V-2.6",
    "shorthand": "2E1P1D",
    "templates": {"D": {"max_batch": 32}},
    "role_switch": {"cooldown": 4}
  })"));
  ASSERT_EQ(cfg.instances.size(), 4u);
  EXPECT_EQ(cfg.instances[0].role, StageRole::Encode);
  EXPECT_EQ(cfg.instances[3].role, StageRole::Decode);
  EXPECT_EQ(cfg.instances[3].max_batch, 32u);
  EXPECT_EQ(cfg.model.name, "MiniCPM-V-2.6");
  EXPECT_EQ(cfg.hardware.num_gpus, 8u);
  ASSERT_TRUE(cfg.role_switch);
  EXPECT_EQ(cfg.role_switch->cooldown, 4.0);
  EXPECT_EQ(cfg.role_switch->imbalance_threshold, ControllerParams{}.imbalance_threshold);
  EXPECT_EQ(Json(cfg.cost), Json(presets::synthetic_cost("MiniCPM-V-2.6")));
}

TEST(Json, PartialObjectsOverlayDefaults) {
  const auto cfg = from_document<SystemConfig>(
      parse_json(R"({"model": "MiniCPM-V-2.6", "shorthand": "1E1P1D", "hardware": {"gpu_memory": 1000},
                     "cost": {"decode_base": 0.5}})"));
  EXPECT_EQ(cfg.hardware.gpu_memory, 1000u);
  EXPECT_EQ(cfg.hardware.num_gpus, models::a100_node().num_gpus);
  EXPECT_EQ(cfg.hardware.intra_node_bandwidth, models::a100_node().intra_node_bandwidth);
  EXPECT_EQ(cfg.cost.decode_base, 0.5);
  EXPECT_EQ(cfg.cost.enc_per_patch, presets::synthetic_cost("MiniCPM-V-2.6").enc_per_patch);
}

TEST(Json, InstancesAndShorthandConflict) {
  EXPECT_EQ(kind_of([] {
              from_document<SystemConfig>(
                  parse_json(R"({"shorthand":"1E1P1D","instances":[{"role":"E"}]})"));
            }),
            ErrorKind::ParseError);
}

TEST(Json, BudgetModes) {
  const auto s = from_document<ConfigSpace>(parse_json(R"({"gpu_budget":4,"budget_mode":"exactly"})"));
  EXPECT_EQ(s.budget_mode, BudgetMode::Exactly);
  EXPECT_EQ(s.gpu_budget, 4u);
  EXPECT_THROW(from_document<ConfigSpace>(parse_json(R"({"budget_mode":"roughly"})")), Error);
}

TEST(ConfigHash, StableAndSensitive) {
  const auto cfg = presets::base_system(models::minicpm_v26());
  const Json a = cfg;
  EXPECT_EQ(config_hash(a), config_hash(Json(cfg)));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // Key order in the source text does not matter.
  EXPECT_EQ(config_hash(parse_json(R"({"a":1,"b":2})")), config_hash(parse_json(R"({"b":2,"a":1})")));
  auto other = cfg;
  other.irp_enabled = !other.irp_enabled;
  EXPECT_NE(config_hash(a), config_hash(Json(other)));
  // Published FNV-1a test vectors.
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}

TEST(Files, SaveThenLoad) {
  const auto path = (std::filesystem::temp_directory_path() / "epd_io_test_space.json").string();
  save_json(path, Json(presets::restricted_space()));
  EXPECT_EQ(enumerate(load<ConfigSpace>(path)).size(), enumerate(presets::restricted_space()).size());
  std::remove(path.c_str());
  EXPECT_EQ(kind_of([&] { load<ConfigSpace>(path); }), ErrorKind::InvalidArgument);
}

}  // namespace
}  // namespace epd
