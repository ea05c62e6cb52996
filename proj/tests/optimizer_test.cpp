// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "epd/optimizer.hpp"
#include "epd/presets.hpp"
#include "support.hpp"

namespace epd {
namespace {

TEST(Cost, Examples) {
  const std::vector<InstanceConfig> two = {{StageRole::Encode, 2, 1, 1}, {StageRole::Decode, 1, 3, 1}};
  EXPECT_EQ(cost(two, 1.0), 5.0);
  EXPECT_EQ(cost(std::vector<InstanceConfig>{}, 3.0), 0.0);
  const auto base = presets::base_system(models::minicpm_v26(), "5E2P1D");
  EXPECT_EQ(cost(base.instances, 1.0), 8.0);
  EXPECT_EQ(cost(base.instances, 2.5), 20.0);
}

TEST(Cost, MatchesDirectSum) {
  testing::Gen g(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<InstanceConfig> is;
    double direct = 0.0;
    const double c = g.real(0.1, 4.0);
    for (auto n = g.uint(0, 10); n > 0; --n) {
      const auto tp = static_cast<std::uint32_t>(g.uint(1, 8)), pp = static_cast<std::uint32_t>(g.uint(1, 4));
      is.push_back({StageRole::Prefill, tp, pp, 1});
      direct += c * tp * pp;
    }
    EXPECT_NEAR(cost(is, c), direct, 1e-9);
  }
}

ConfigSpace small_space() {
  ConfigSpace s;
  s.gpu_budget = 6;
  s.encode.counts = {1, 2, 3};
  s.prefill.counts = {1, 2};
  s.decode.counts = {1, 2};
  s.decode.batch = {8, 16};
  s.irp = {true, false};
  return s;
}

TEST(Enumerate, RestrictedSpaceSize) {
  // Compositions of 8 into three parts in [1, 6], times the batch and irp choices.
  std::size_t splits = 0;
  for (int e = 1; e <= 6; ++e)
    for (int p = 1; p <= 6; ++p)
      for (int d = 1; d <= 6; ++d) splits += (e + p + d == 8);
  const auto all = enumerate(presets::restricted_space());
  EXPECT_EQ(all.size(), splits * 4 * 3 * 4 * 2);
  for (const auto& c : all) EXPECT_EQ(gpu_count(c), 8u);
  EXPECT_EQ(std::set<Candidate>(all.begin(), all.end()).size(), all.size());
}

TEST(Enumerate, AtMostBudget) {
  const auto s = small_space();
  const auto all = enumerate(s);
  std::size_t expected = 0;
  for (int e = 1; e <= 3; ++e)
    for (int p = 1; p <= 2; ++p)
      for (int d = 1; d <= 2; ++d) expected += (e + p + d <= 6) * 2 * 2;
  EXPECT_EQ(all.size(), expected);
  for (const auto& c : all) EXPECT_TRUE(within_budget(s, c));
  EXPECT_EQ(raw_size(s), 3 * 2 * 2 * 2 * 2.0);
}

TEST(Enumerate, EncodePipelineExcluded) {
  auto s = small_space();
  s.encode.pp = {1, 2};
  for (const auto& c : enumerate(s)) EXPECT_EQ(c.encode.pp, 1u);
}

TEST(Enumerate, RejectsEmptyRanges) {
  auto s = small_space();
  s.prefill.tp.clear();
  EXPECT_THROW(enumerate(s), Error);
  s = small_space();
  s.decode.batch = {0};
  EXPECT_THROW(enumerate(s), Error);
}

TEST(SampleUniform, FeasibleAndDeterministic) {
  const auto s = presets::restricted_space();
  const auto a = sample_uniform(s, 200, 5);
  EXPECT_EQ(a, sample_uniform(s, 200, 5));
  for (const auto& c : a) EXPECT_TRUE(within_budget(s, c));
  // Uniform over the feasible set: every E count with a feasible split shows up.
  std::set<std::uint32_t> counts;
  for (const auto& c : a) counts.insert(c.encode.count);
  EXPECT_EQ(counts.size(), 6u);
}

TEST(SampleUniform, EmptyFeasibleSet) {
  auto s = small_space();
  s.gpu_budget = 2;
  s.budget_mode = BudgetMode::Exactly;
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_candidate(s, rng, 1000), Error);
  EXPECT_THROW(solve(s, [](const Candidate&) { return 0.0; }, Strategy::Exhaustive, 1, 0), Error);
}

TEST(ToSystemConfig, ExpandsStages) {
  Candidate c;
  c.encode = {3, 1, 1, 4};
  c.prefill = {2, 2, 1, 1};
  c.decode = {1, 1, 2, 32};
  c.irp = false;
  const auto cfg = to_system_config(c, presets::base_system(models::minicpm_v26()));
  ASSERT_EQ(cfg.instances.size(), 6u);
  EXPECT_FALSE(cfg.irp_enabled);
  EXPECT_EQ(cfg.instances[0].role, StageRole::Encode);
  EXPECT_EQ(cfg.instances[0].max_batch, 4u);
  EXPECT_EQ(cfg.instances[3].tp, 2u);
  EXPECT_EQ(cfg.instances[5].pp, 2u);
  EXPECT_EQ(cost(cfg.instances, 1.0), gpu_count(c));
  EXPECT_EQ(describe(c), "3E(tp1,pp1,b4)2P(tp2,pp1,b1)1D(tp1,pp2,b32) FCFS no-irp");
}

// Synthetic objective with a unique maximum away from the grid edges.
double synthetic(const Candidate& c) {
  return -std::abs(double(c.encode.count) - 2) - std::abs(double(c.decode.batch) - 16) / 8.0 + (c.irp ? 0.5 : 0.0);
}

TEST(Solve, ExhaustiveFindsArgmax) {
  const auto s = small_space();
  const auto all = enumerate(s);
  ASSERT_LE(all.size(), 50u);
  const auto r = solve(s, synthetic, Strategy::Exhaustive, 1, 0);
  double best = kInfeasibleScore;
  for (const auto& c : all) best = std::max(best, synthetic(c));
  EXPECT_EQ(r.best_score, best);
  EXPECT_EQ(synthetic(r.best), best);
  EXPECT_EQ(r.log.size(), all.size());
  EXPECT_EQ(r.distinct_evaluations, all.size());
}

TEST(Solve, BetaPrefersCheaperOnTies) {
  const auto s = small_space();
  const double beta = 0.1;
  const auto flat = [&](const Candidate& c) { return 1.0 - beta * gpu_count(c); };
  const auto r = solve(s, flat, Strategy::Exhaustive, 1, 0);
  EXPECT_EQ(gpu_count(r.best), 3u);
  // Larger beta never picks a more expensive config.
  std::uint32_t prev = 100;
  for (double b : {0.0, 0.05, 0.2, 1.0}) {
    const auto scored = [&](const Candidate& c) { return synthetic(c) - b * gpu_count(c); };
    const auto g = gpu_count(solve(s, scored, Strategy::Exhaustive, 1, 0).best);
    EXPECT_LE(g, prev);
    prev = g;
  }
}

TEST(Solve, InfeasibleNeverWins) {
  const auto s = small_space();
  const auto half = [](const Candidate& c) { return c.irp ? kInfeasibleScore : synthetic(c); };
  for (auto strategy : {Strategy::Exhaustive, Strategy::RandomSearch, Strategy::SurrogateGuided}) {
    const auto r = solve(s, half, strategy, 10, 3);
    EXPECT_FALSE(r.best.irp);
    EXPECT_TRUE(std::isfinite(r.best_score));
  }
  EXPECT_THROW(solve(s, [](const Candidate&) { return kInfeasibleScore; }, Strategy::RandomSearch, 5, 0), Error);
}

TEST(Solve, BestDominatesLog) {
  const auto s = presets::restricted_space();
  for (auto strategy : {Strategy::RandomSearch, Strategy::SurrogateGuided}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = solve(s, synthetic, strategy, 40, seed);
      ASSERT_EQ(r.log.size(), 40u);
      for (const auto& e : r.log) {
        EXPECT_LE(e.score, r.best_score);
        EXPECT_EQ(e.score, synthetic(e.candidate));
        EXPECT_TRUE(within_budget(s, e.candidate));
      }
      EXPECT_LE(r.distinct_evaluations, 40u);
    }
  }
}

TEST(Solve, SearchBeatsTypicalSample) {
  const auto s = presets::restricted_space();
  const auto sample = sample_uniform(s, 101, 99);
  std::vector<double> scores;
  for (const auto& c : sample) scores.push_back(synthetic(c));
  std::nth_element(scores.begin(), scores.begin() + 50, scores.end());
  const double median = scores[50];
  for (auto strategy : {Strategy::RandomSearch, Strategy::SurrogateGuided})
    for (std::uint64_t seed = 0; seed < 5; ++seed)
      EXPECT_GE(solve(s, synthetic, strategy, 30, seed).best_score, median);
}

TEST(Solve, SmallSpaceIsEnumeratedWithinTrials) {
  const auto s = small_space();
  const auto r = solve(s, synthetic, Strategy::RandomSearch, 1000, 1);
  EXPECT_EQ(r.log.size(), enumerate(s).size());
  EXPECT_EQ(r.best_score, solve(s, synthetic, Strategy::Exhaustive, 1, 0).best_score);
}

TEST(Solve, DeterministicPerSeed) {
  const auto s = presets::restricted_space();
  const auto a = solve(s, synthetic, Strategy::SurrogateGuided, 25, 8);
  const auto b = solve(s, synthetic, Strategy::SurrogateGuided, 25, 8);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].candidate, b.log[i].candidate);
  EXPECT_THROW(solve(s, synthetic, Strategy::RandomSearch, 0, 8), Error);
}

TEST(Evaluate, CostPenaltyIsExact) {
  auto p = presets::optimizer_ablation();
  Objective obj;
  obj.metric = Metric::NegMeanTTFT;
  obj.workload = p.workload;
  obj.workload.num_requests = 10;
  obj.workload.rate = 1.0;
  Candidate c;
  c.encode = {4, 1, 1, 1};
  c.prefill = {2, 1, 1, 1};
  c.decode = {2, 1, 1, 16};
  const double f = evaluate(c, p.systems.front().config, obj);
  ASSERT_TRUE(std::isfinite(f));
  EXPECT_LT(f, 0.0);
  obj.beta = 0.25;
  EXPECT_NEAR(evaluate(c, p.systems.front().config, obj), f - 0.25 * 8, 1e-12);
  obj.beta = -1;
  EXPECT_THROW(evaluate(c, p.systems.front().config, obj), Error);
}

TEST(Evaluate, UndeployableIsInfeasible) {
  auto base = presets::base_system(models::minicpm_v26());
  base.hardware.gpu_memory = 8'000'000'000ull;
  Objective obj;
  obj.metric = Metric::Throughput;
  obj.workload.num_requests = 5;
  Candidate c;  // 7.6B of LLM weights do not fit in 8 GB at tp 1
  c.prefill = {1, 1, 1, 1};
  c.encode = {1, 1, 1, 1};
  c.decode = {1, 1, 1, 1};
  EXPECT_EQ(evaluate(c, base, obj), kInfeasibleScore);
}

TEST(Parse, NamesRoundTrip) {
  for (auto s : {Strategy::Exhaustive, Strategy::RandomSearch, Strategy::SurrogateGuided})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  for (auto m : {Metric::Goodput, Metric::NegMeanTTFT, Metric::Throughput}) EXPECT_EQ(parse_metric(to_string(m)), m);
  EXPECT_THROW(parse_strategy("annealing"), Error);
  EXPECT_THROW(parse_metric("latency"), Error);
}

TEST(SearchLog, OneRowPerTrial) {
  const auto r = solve(small_space(), synthetic, Strategy::Exhaustive, 1, 0);
  std::ostringstream out;
  write_search_log(out, r);
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, kSearchLogHeader.size()), kSearchLogHeader);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), r.log.size() + 1);
  SolveResult inf;
  inf.log.push_back({0, Candidate{}, kInfeasibleScore});
  std::ostringstream o2;
  write_search_log(o2, inf);
  EXPECT_NE(o2.str().find(",-inf\n"), std::string::npos);
}

}  // namespace
}  // namespace epd
