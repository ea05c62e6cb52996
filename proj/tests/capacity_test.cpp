// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "epd/capacity.hpp"
#include "epd/presets.hpp"
#include "support.hpp"

namespace epd {
namespace {

const Resolution kToyRes{1, 1};

// One byte per parameter and per MM token, so byte counts read directly.
ModelSpec toy_model(std::uint64_t encoder_params, std::uint64_t llm_params, std::uint32_t tokens_per_patch) {
  ModelSpec m;
  m.name = "toy";
  m.encoder_params = encoder_params;
  m.llm_params = llm_params;
  m.bytes_per_param = 1;
  m.num_layers = 1;
  m.kv_heads = 1;
  m.head_dim = 1;
  m.hidden_dim = 1;
  m.tokens_per_patch = tokens_per_patch;
  m.patch_table = {{kToyRes, 1}};
  m.max_context_tokens = 1'000'000'000;
  return m;
}

HardwareSpec toy_hw(Bytes memory) {
  HardwareSpec hw;
  hw.gpu_memory = memory;
  hw.intra_node_bandwidth = 1.0;
  hw.inter_node_bandwidth = 1.0;
  hw.num_gpus = 1;
  return hw;
}

DeploymentShape toy_shape(StageRole role, double kv_fraction) {
  DeploymentShape s;
  s.role = role;
  s.kv_fraction = kv_fraction;
  s.prompt_tokens = 0;
  return s;
}

TEST(MaxImages, ToyLinearScan) {
  // weights 10 B, 2 B per image, 20 B of memory.
  const auto r = max_images_per_request(toy_model(10, 1, 2), toy_hw(20), toy_shape(StageRole::Encode, 0.0), kToyRes);
  ASSERT_TRUE(r.max_images_per_request);
  EXPECT_EQ(*r.max_images_per_request, 5u);
  EXPECT_EQ(r.limiting_factor, LimitingFactor::Memory);
  EXPECT_FALSE(r.oom);
}

TEST(MaxImages, WeightsTooLargeIsOom) {
  const auto r = max_images_per_request(toy_model(30, 1, 2), toy_hw(20), toy_shape(StageRole::Encode, 0.0), kToyRes);
  EXPECT_TRUE(r.oom);
  EXPECT_FALSE(r.max_images_per_request);
}

TEST(MaxImages, ContextBindsForInternVl8B) {
  const auto m = models::internvl2_8b();
  const auto hw = models::a100_node();
  for (const auto& res : {models::k4K, models::kMedium}) {
    const auto r = max_images_per_request(m, hw, DeploymentShape{}, res);
    ASSERT_TRUE(r.max_images_per_request);
    EXPECT_EQ(r.limiting_factor, LimitingFactor::ContextLength) << to_string(res);
    const std::uint64_t per_image = patches_for_image(m, res) * m.tokens_per_patch;
    EXPECT_EQ(*r.max_images_per_request, (m.max_context_tokens - 22) / per_image);
  }
}

TEST(MaxBatch, ToyLinearScan) {
  // 3 B per request, 9 B free after 11 B of weights.
  const auto r = max_batch(toy_model(11, 1, 3), toy_hw(20), toy_shape(StageRole::Encode, 0.0), 1, kToyRes);
  ASSERT_TRUE(r.max_batch);
  EXPECT_EQ(*r.max_batch, 3u);
}

TEST(MaxBatch, ZeroImagesRejected) {
  EXPECT_THROW(max_batch(models::minicpm_v26(), models::a100_node(), DeploymentShape{}, 0, models::k4K), Error);
}

TEST(MaxBatch, OoclWhenPromptTooLong) {
  const auto r = max_batch(models::internvl2_8b(), models::a100_node(), DeploymentShape{}, 20, models::k4K);
  EXPECT_TRUE(r.oocl);
  EXPECT_EQ(r.limiting_factor, LimitingFactor::ContextLength);
  EXPECT_FALSE(r.max_batch);
}

TEST(MaxBatch, EncodeShapeDominatesAggregated) {
  const auto hw = models::a100_node();
  for (const auto& m : models::all()) {
    for (const auto& res : {models::kSmall, models::kMedium, models::k4K}) {
      const auto e = max_batch(m, hw, presets::heavy_shape(StageRole::Encode), 1, res);
      const auto ep = max_batch(m, hw, presets::heavy_shape(StageRole::EncodePrefill), 1, res);
      ASSERT_TRUE(e.max_batch) << m.name;
      if (ep.max_batch) { EXPECT_GT(*e.max_batch, *ep.max_batch) << m.name << ' ' << to_string(res); }
    }
  }
}

TEST(MaxBatch, HeavyProfileRatioAtLeastFive) {
  const auto hw = models::a100_node();
  for (const auto& m : models::all()) {
    const auto e = max_batch(m, hw, presets::heavy_shape(StageRole::Encode), presets::kHeavyImages,
                             presets::kHeavyResolution);
    const auto ep = max_batch(m, hw, presets::heavy_shape(StageRole::EncodePrefill), presets::kHeavyImages,
                              presets::kHeavyResolution);
    ASSERT_TRUE(e.max_batch);
    ASSERT_TRUE(ep.max_batch);
    EXPECT_GE(*e.max_batch, 5 * *ep.max_batch) << m.name;
  }
}

TEST(MaxKvFraction, ToyGridSearch) {
  // 40 B of non-KV demand out of 100 B free.
  auto m = toy_model(1, 10, 10);
  auto s = toy_shape(StageRole::Prefill, 0.0);
  s.prompt_tokens = 30;
  const auto r = max_kv_fraction(m, toy_hw(110), s, 1, kToyRes);
  ASSERT_TRUE(r.max_kv_fraction);
  EXPECT_DOUBLE_EQ(*r.max_kv_fraction, 0.60);
}

TEST(MaxKvFraction, ExactFitGivesZero) {
  auto m = toy_model(1, 10, 10);
  auto s = toy_shape(StageRole::Prefill, 0.0);
  s.prompt_tokens = 30;
  const auto r = max_kv_fraction(m, toy_hw(50), s, 1, kToyRes);
  ASSERT_TRUE(r.max_kv_fraction);
  EXPECT_DOUBLE_EQ(*r.max_kv_fraction, 0.0);
  EXPECT_TRUE(max_kv_fraction(m, toy_hw(49), s, 1, kToyRes).oom);
}

TEST(MaxKvFraction, DisaggregatedPrefillKeepsMore) {
  const auto hw = models::a100_node();
  for (const auto& m : models::all()) {
    const auto p = max_kv_fraction(m, hw, presets::heavy_shape(StageRole::Prefill), 4, models::k4K);
    const auto ep = max_kv_fraction(m, hw, presets::heavy_shape(StageRole::EncodePrefill), 4, models::k4K);
    if (p.oocl) continue;
    ASSERT_TRUE(p.max_kv_fraction) << m.name;
    if (ep.max_kv_fraction) { EXPECT_GE(*p.max_kv_fraction, *ep.max_kv_fraction) << m.name; }
  }
}

TEST(FreeMemory, EncodeShapeNeverBelowAggregated) {
  const auto hw = models::a100_node();
  for (const auto& m : models::all()) {
    const auto e = free_memory(m, hw, presets::heavy_shape(StageRole::Encode));
    const auto ep = free_memory(m, hw, presets::heavy_shape(StageRole::EncodePrefill));
    ASSERT_TRUE(e);
    if (ep) { EXPECT_GE(*e, *ep); }
  }
}

TEST(Shape, KvFractionOutOfRange) {
  auto s = DeploymentShape{};
  s.kv_fraction = 1.5;
  EXPECT_THROW(max_batch(models::minicpm_v26(), models::a100_node(), s, 1, models::k4K), Error);
}

// Randomized toy models against an independent scan over the byte accounting.
struct ToyCase {
  ModelSpec model;
  HardwareSpec hw;
  DeploymentShape shape;
};

Bytes oracle_demand(const ToyCase& c, std::uint64_t images) {
  const auto& m = c.model;
  const std::uint64_t patches = images;  // one patch per toy image
  const std::uint64_t mm = patches * m.tokens_per_patch;
  const std::uint64_t tokens = mm + c.shape.prompt_tokens;
  const bool enc = c.shape.role != StageRole::Prefill && c.shape.role != StageRole::Decode;
  const bool pre = c.shape.role != StageRole::Encode;
  Bytes d = 0;
  if (enc) d += patches * c.shape.encoder_activation_bytes_per_patch + (pre ? 0 : mm * m.hidden_dim);
  if (pre) d += tokens * (2ull * m.num_layers * m.kv_heads * m.head_dim + m.hidden_dim + c.shape.activation_bytes_per_token);
  return d;
}

std::optional<Bytes> oracle_free(const ToyCase& c) {
  const auto& m = c.model;
  Bytes w = 0;
  switch (c.shape.role) {
    case StageRole::Encode: w = m.encoder_params; break;
    case StageRole::Prefill:
    case StageRole::Decode: w = m.llm_params; break;
    default: w = m.encoder_params + m.llm_params;
  }
  if (w > c.hw.gpu_memory) return std::nullopt;
  Bytes free = c.hw.gpu_memory - w;
  if (c.shape.role != StageRole::Encode) {
    const Bytes r = static_cast<Bytes>(std::floor(c.shape.kv_fraction * static_cast<double>(free))) +
                    c.shape.mm_cache_tokens * m.hidden_dim;
    if (r > free) return std::nullopt;
    free -= r;
  }
  return free;
}

ToyCase random_toy(testing::Gen& g) {
  ToyCase c;
  c.model = toy_model(g.uint(1, 500), g.uint(1, 500), static_cast<std::uint32_t>(g.uint(1, 8)));
  c.model.max_context_tokens = static_cast<std::uint32_t>(g.uint(20, 400));
  c.hw = toy_hw(g.uint(100, 20000));
  c.shape.role = g.pick(std::vector<StageRole>{StageRole::Encode, StageRole::Prefill, StageRole::EncodePrefill,
                                               StageRole::Monolithic});
  c.shape.kv_fraction = static_cast<double>(g.uint(0, 90)) / 100.0;
  c.shape.mm_cache_tokens = g.uint(0, 20);
  c.shape.prompt_tokens = static_cast<std::uint32_t>(g.uint(0, 15));
  c.shape.encoder_activation_bytes_per_patch = g.uint(0, 5);
  c.shape.activation_bytes_per_token = g.uint(0, 3);
  return c;
}

TEST(CapacityProperty, MaximaMatchLinearScan) {
  testing::Gen g(2026);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = random_toy(g);
    const auto free = oracle_free(c);
    auto feasible = [&](std::uint64_t images, std::uint64_t batch) {
      return free && batch * oracle_demand(c, images) <= *free &&
             images * c.model.tokens_per_patch + c.shape.prompt_tokens <= c.model.max_context_tokens;
    };
    // Images per request, batch 1.
    std::optional<std::uint64_t> n_star;
    if (feasible(0, 1))
      for (std::uint64_t n = 0; n <= 400 && feasible(n, 1); ++n) n_star = n;
    const auto r = max_images_per_request(c.model, c.hw, c.shape, kToyRes);
    if (!n_star) {
      EXPECT_TRUE(r.oom) << "trial " << trial;
    } else {
      ASSERT_TRUE(r.max_images_per_request) << "trial " << trial;
      EXPECT_EQ(*r.max_images_per_request, *n_star) << "trial " << trial;
    }
    // Batch at 1 image per request.
    std::optional<std::uint64_t> b_star;
    for (std::uint64_t b = 1; b <= 20000 && feasible(1, b); ++b) b_star = b;
    const auto rb = max_batch(c.model, c.hw, c.shape, 1, kToyRes);
    if (oracle_demand(c, 1) == 0) continue;
    if (b_star) {
      ASSERT_TRUE(rb.max_batch) << "trial " << trial;
      EXPECT_EQ(*rb.max_batch, *b_star) << "trial " << trial;
    } else {
      EXPECT_FALSE(rb.max_batch) << "trial " << trial;
    }
  }
}

TEST(CapacityProperty, FeasibilityIsMonotone) {
  testing::Gen g(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = random_toy(g);
    bool prev = true;
    for (std::uint64_t n = 0; n < 60; ++n) {
      const bool ok = images_feasible(c.model, c.hw, c.shape, n, kToyRes);
      if (!prev) { EXPECT_FALSE(ok) << "trial " << trial << " n " << n; }
      prev = ok;
    }
  }
}

TEST(CapacityProperty, KvFractionMatchesGridSearch) {
  testing::Gen g(99);
  for (int trial = 0; trial < 300; ++trial) {
    auto c = random_toy(g);
    c.shape.role = g.chance(0.5) ? StageRole::Prefill : StageRole::EncodePrefill;
    const auto r = max_kv_fraction(c.model, c.hw, c.shape, 1, kToyRes);
    if (r.oocl || r.oom) continue;
    ASSERT_TRUE(r.max_kv_fraction);
    // Largest k with k% of free memory plus the non-KV demand fitting.
    const Bytes w = c.shape.role == StageRole::Prefill ? c.model.llm_params
                                                       : c.model.llm_params + c.model.encoder_params;
    const Bytes free = c.hw.gpu_memory - w;
    auto nokv = c;
    nokv.model.num_layers = 0;  // drops the KV term from the oracle demand
    const Bytes fixed = oracle_demand(nokv, 1) + c.shape.mm_cache_tokens * c.model.hidden_dim;
    int k_star = -1;
    for (int k = 0; k <= 100; ++k)
      if (static_cast<double>(k) / 100.0 * static_cast<double>(free) + static_cast<double>(fixed) <=
          static_cast<double>(free) + 1e-9)
        k_star = k;
    EXPECT_DOUBLE_EQ(*r.max_kv_fraction, k_star / 100.0) << "trial " << trial;
  }
}

}  // namespace
}  // namespace epd
