// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epd/common.hpp"
#include "epd/metrics.hpp"
#include "epd/sim/engine.hpp"
#include "epd/sim/system_config.hpp"
#include "epd/workload.hpp"

namespace epd {

/// c * sum(tp * pp) over instances.
inline double cost(std::span<const InstanceConfig> instances, double cost_per_gpu) {
  double total = 0.0;
  for (const auto& i : instances) total += static_cast<double>(i.tp) * static_cast<double>(i.pp);
  return cost_per_gpu * total;
}

enum class BudgetMode { AtMost, Exactly };

struct StageRange {
  std::vector<std::uint32_t> counts{1};
  std::vector<std::uint32_t> tp{1};
  std::vector<std::uint32_t> pp{1};
  std::vector<std::uint32_t> batch{1};
};

/// Every instance of a stage shares tp, pp, and batch size.
struct ConfigSpace {
  std::uint32_t gpu_budget = 8;
  BudgetMode budget_mode = BudgetMode::AtMost;
  StageRange encode;
  StageRange prefill;
  StageRange decode;
  std::vector<SchedulePolicy> policies{SchedulePolicy::FCFS};
  std::vector<bool> irp{true};
};

struct StageChoice {
  std::uint32_t count = 1;
  std::uint32_t tp = 1;
  std::uint32_t pp = 1;
  std::uint32_t batch = 1;

  friend bool operator==(const StageChoice&, const StageChoice&) = default;
  friend auto operator<=>(const StageChoice&, const StageChoice&) = default;
};

struct Candidate {
  StageChoice encode;
  StageChoice prefill;
  StageChoice decode;
  SchedulePolicy policy = SchedulePolicy::FCFS;
  bool irp = true;

  friend bool operator==(const Candidate&, const Candidate&) = default;
  friend auto operator<=>(const Candidate&, const Candidate&) = default;
};

inline std::uint32_t gpu_count(const Candidate& c) {
  auto g = [](const StageChoice& s) { return s.count * s.tp * s.pp; };
  return g(c.encode) + g(c.prefill) + g(c.decode);
}

inline void validate(const ConfigSpace& s) {
  for (const StageRange* r : {&s.encode, &s.prefill, &s.decode}) {
    if (r->counts.empty() || r->tp.empty() || r->pp.empty() || r->batch.empty())
      throw Error(ErrorKind::InvalidArgument, "config space ranges must be non-empty");
    for (const auto* v : {&r->counts, &r->tp, &r->pp, &r->batch})
      for (auto x : *v)
        if (x < 1) throw Error(ErrorKind::InvalidArgument, "config space values must be >= 1");
  }
  if (s.policies.empty() || s.irp.empty())
    throw Error(ErrorKind::InvalidArgument, "config space ranges must be non-empty");
  if (s.gpu_budget < 1) throw Error(ErrorKind::InvalidArgument, "gpu_budget must be >= 1");
}

inline bool within_budget(const ConfigSpace& s, const Candidate& c) {
  if (c.encode.pp != 1) return false;
  const auto g = gpu_count(c);
  return s.budget_mode == BudgetMode::Exactly ? g == s.gpu_budget : g <= s.gpu_budget;
}

namespace optimizer_detail {

inline std::vector<StageChoice> stage_choices(const StageRange& r) {
  std::vector<StageChoice> out;
  for (auto n : r.counts)
    for (auto tp : r.tp)
      for (auto pp : r.pp)
        for (auto b : r.batch) out.push_back({n, tp, pp, b});
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline bool pick_bool(const std::vector<bool>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

}  // namespace optimizer_detail

/// All budget-feasible candidates, in lexicographic order of the space's ranges.
inline std::vector<Candidate> enumerate(const ConfigSpace& space) {
  using namespace optimizer_detail;
  validate(space);
  std::vector<Candidate> out;
  const auto es = stage_choices(space.encode), ps = stage_choices(space.prefill),
             ds = stage_choices(space.decode);
  for (const auto& e : es)
    for (const auto& p : ps)
      for (const auto& d : ds)
        for (auto pol : space.policies)
          for (bool irp : space.irp) {
            Candidate c{e, p, d, pol, irp};
            if (within_budget(space, c)) out.push_back(c);
          }
  return out;
}

/// Grid size before the budget filter.
inline double raw_size(const ConfigSpace& space) {
  double n = static_cast<double>(space.policies.size() * space.irp.size());
  for (const auto* r : {&space.encode, &space.prefill, &space.decode})
    n *= static_cast<double>(r->counts.size() * r->tp.size() * r->pp.size() * r->batch.size());
  return n;
}

/// Uniform draw over the space's grid, rejected until the budget holds.
inline Candidate sample_candidate(const ConfigSpace& space, std::mt19937_64& rng,
                                  std::uint32_t max_attempts = 100000) {
  using optimizer_detail::pick;
  for (std::uint32_t a = 0; a < max_attempts; ++a) {
    Candidate c;
    for (auto [choice, range] : {std::pair{&c.encode, &space.encode}, std::pair{&c.prefill, &space.prefill},
                                 std::pair{&c.decode, &space.decode}}) {
      choice->count = pick(range->counts, rng);
      choice->tp = pick(range->tp, rng);
      choice->pp = pick(range->pp, rng);
      choice->batch = pick(range->batch, rng);
    }
    c.policy = pick(space.policies, rng);
    c.irp = optimizer_detail::pick_bool(space.irp, rng);
    if (within_budget(space, c)) return c;
  }
  throw Error(ErrorKind::EmptyFeasibleSet, "rejection sampling found no budget-feasible config");
}

inline std::vector<Candidate> sample_uniform(const ConfigSpace& space, std::size_t n, std::uint64_t seed) {
  validate(space);
  std::mt19937_64 rng(seed);
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_candidate(space, rng));
  return out;
}

/// Expands a candidate onto a base system (model, hardware, costs, caches).
inline SystemConfig to_system_config(const Candidate& c, const SystemConfig& base) {
  SystemConfig cfg = base;
  cfg.instances.clear();
  cfg.irp_enabled = c.irp;
  for (auto [role, s] : {std::pair{StageRole::Encode, c.encode}, std::pair{StageRole::Prefill, c.prefill},
                         std::pair{StageRole::Decode, c.decode}})
    for (std::uint32_t i = 0; i < s.count; ++i) cfg.instances.push_back({role, s.tp, s.pp, s.batch, c.policy});
  return cfg;
}

inline std::string describe(const Candidate& c) {
  auto stage = [](const StageChoice& s, const char* code) {
    return std::to_string(s.count) + code + "(tp" + std::to_string(s.tp) + ",pp" + std::to_string(s.pp) + ",b" +
           std::to_string(s.batch) + ")";
  };
  return stage(c.encode, "E") + stage(c.prefill, "P") + stage(c.decode, "D") + " " +
         std::string(to_string(c.policy)) + (c.irp ? " irp" : " no-irp");
}

/// Feature vector for the surrogate: counts, log2 tp/pp/batch, policy one-hot, irp.
inline std::vector<double> encode_candidate(const Candidate& c) {
  std::vector<double> v;
  for (const auto* s : {&c.encode, &c.prefill, &c.decode}) v.push_back(s->count);
  for (const auto* s : {&c.encode, &c.prefill, &c.decode}) v.push_back(std::log2(s->tp));
  for (const auto* s : {&c.encode, &c.prefill, &c.decode}) v.push_back(std::log2(s->pp));
  for (const auto* s : {&c.encode, &c.prefill, &c.decode}) v.push_back(std::log2(s->batch));
  v.push_back(c.policy == SchedulePolicy::FCFS);
  v.push_back(c.policy == SchedulePolicy::RoundRobinAssign);
  v.push_back(c.policy == SchedulePolicy::LeastLoadedAssign);
  v.push_back(c.irp ? 1.0 : 0.0);
  return v;
}

// ---------------------------------------------------------------------------
// Objective and evaluation.

enum class Metric { Goodput, NegMeanTTFT, Throughput };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Goodput: return "goodput";
    case Metric::NegMeanTTFT: return "neg_mean_ttft";
    case Metric::Throughput: return "throughput";
  }
  return "unknown";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "goodput") return Metric::Goodput;
  if (s == "neg_mean_ttft" || s == "ttft") return Metric::NegMeanTTFT;
  if (s == "throughput") return Metric::Throughput;
  throw Error(ErrorKind::ParseError, "unknown objective '" + std::string(s) + "'");
}

struct Objective {
  Metric metric = Metric::Goodput;
  double beta = 0.0;
  double cost_per_gpu = 1.0;
  WorkloadSpec workload;           // rate is used by the non-goodput metrics
  std::vector<double> rate_grid;   // goodput sweep grid
  std::optional<SloLimits> slo;
  double threshold = kGoodputThreshold;
};

inline constexpr double kInfeasibleScore = -std::numeric_limits<double>::infinity();

/// Metric value f for one simulated system (before the cost penalty).
inline double objective_value(const SystemConfig& cfg, const Objective& obj) {
  switch (obj.metric) {
    case Metric::Goodput: return goodput(cfg, obj.workload, obj.rate_grid, obj.slo, obj.threshold);
    case Metric::NegMeanTTFT: {
      const auto t = sim::run_simulation(cfg, generate_poisson(obj.workload), obj.workload.seed);
      const auto s = summarize(t);
      if (s.completed == 0) return kInfeasibleScore;
      return -s.mean_ttft;
    }
    case Metric::Throughput: {
      const auto t = sim::run_simulation(cfg, generate_poisson(obj.workload), obj.workload.seed);
      if (t.makespan <= 0.0) return 0.0;
      return static_cast<double>(sim::completed_count(t)) / t.makespan;
    }
  }
  return kInfeasibleScore;
}

/// f - beta * cost; infeasible systems score -infinity.
inline double evaluate(const Candidate& c, const SystemConfig& base, const Objective& obj) {
  if (!(obj.beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
  const SystemConfig cfg = to_system_config(c, base);
  try {
    sim::validate_deployable(cfg);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInfeasible) return kInfeasibleScore;
    throw;
  }
  return objective_value(cfg, obj) - obj.beta * cost(cfg.instances, obj.cost_per_gpu);
}

// ---------------------------------------------------------------------------
// Search.

enum class Strategy { Exhaustive, RandomSearch, SurrogateGuided };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Exhaustive: return "exhaustive";
    case Strategy::RandomSearch: return "random";
    case Strategy::SurrogateGuided: return "surrogate";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "exhaustive") return Strategy::Exhaustive;
  if (s == "random") return Strategy::RandomSearch;
  if (s == "surrogate") return Strategy::SurrogateGuided;
  throw Error(ErrorKind::ParseError, "unknown strategy '" + std::string(s) + "'");
}

struct SearchLogEntry {
  std::uint32_t trial = 0;
  Candidate candidate;
  double score = 0.0;
};

struct SolveResult {
  Candidate best;
  double best_score = kInfeasibleScore;
  std::vector<SearchLogEntry> log;
  std::size_t distinct_evaluations = 0;
};

using Evaluator = std::function<double(const Candidate&)>;

namespace optimizer_detail {

/// Caches scores so repeated samples are not re-simulated, and keeps the log.
class Tracker {
 public:
  explicit Tracker(const Evaluator& eval) : eval_(eval) {}

  double score(const Candidate& c) {
    auto it = cache_.find(c);
    const double s = it != cache_.end() ? it->second : cache_.emplace(c, eval_(c)).first->second;
    result_.log.push_back({static_cast<std::uint32_t>(result_.log.size()), c, s});
    if (result_.log.size() == 1 || s > result_.best_score) {
      result_.best_score = s;
      result_.best = c;
    }
    return s;
  }

  bool seen(const Candidate& c) const { return cache_.count(c) != 0; }
  const std::map<Candidate, double>& cache() const { return cache_; }

  SolveResult finish() {
    if (!std::isfinite(result_.best_score))
      throw Error(ErrorKind::EmptyFeasibleSet, "no evaluated config was feasible");
    result_.distinct_evaluations = cache_.size();
    return std::move(result_);
  }

 private:
  const Evaluator& eval_;
  std::map<Candidate, double> cache_;
  SolveResult result_;
};

inline double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct Prediction {
  double mean = 0.0;
  double sigma = 0.0;
};

/// Inverse-distance-weighted mean; spread grows with distance to the nearest sample.
inline Prediction idw_predict(const std::vector<std::pair<std::vector<double>, double>>& points,
                              const std::vector<double>& x, double spread) {
  double wsum = 0.0, acc = 0.0, nearest = std::numeric_limits<double>::infinity();
  for (const auto& [p, y] : points) {
    const double d2 = sq_distance(p, x);
    nearest = std::min(nearest, d2);
    if (d2 == 0.0) return {y, 0.0};
    const double w = 1.0 / d2;
    wsum += w;
    acc += w * y;
  }
  return {acc / wsum, spread * std::sqrt(nearest)};
}

inline double expected_improvement(const Prediction& p, double best) {
  if (p.sigma <= 0.0) return std::max(0.0, p.mean - best);
  const double z = (p.mean - best) / p.sigma;
  return (p.mean - best) * normal_cdf(z) + p.sigma * normal_pdf(z);
}

}  // namespace optimizer_detail

/// Maximizes `eval` over `space`. Exhaustive ignores `trials`; the sampling
/// strategies evaluate exactly `trials` draws (repeats hit the cache) unless
/// the whole space fits in `trials`.
inline SolveResult solve(const ConfigSpace& space, const Evaluator& eval, Strategy strategy, std::uint32_t trials,
                         std::uint64_t seed) {
  using namespace optimizer_detail;
  validate(space);
  if (trials < 1) throw Error(ErrorKind::InvalidArgument, "trials must be >= 1");
  Tracker tracker(eval);
  std::mt19937_64 rng(seed);

  // Spaces no larger than the trial budget are enumerated outright.
  constexpr double kEnumerateLimit = 1e6;
  if (strategy == Strategy::Exhaustive ||
      (raw_size(space) <= kEnumerateLimit && enumerate(space).size() <= trials)) {
    const auto all = enumerate(space);
    if (all.empty()) throw Error(ErrorKind::EmptyFeasibleSet, "config space has no budget-feasible config");
    for (const auto& c : all) tracker.score(c);
    return tracker.finish();
  }

  if (strategy == Strategy::RandomSearch) {
    for (std::uint32_t t = 0; t < trials; ++t) tracker.score(sample_candidate(space, rng));
    return tracker.finish();
  }

  const std::uint32_t warmup = std::min<std::uint32_t>(trials, std::max<std::uint32_t>(2, trials / 4));
  for (std::uint32_t t = 0; t < warmup; ++t) tracker.score(sample_candidate(space, rng));
  constexpr std::size_t kPool = 64;
  for (std::uint32_t t = warmup; t < trials; ++t) {
    std::vector<std::pair<std::vector<double>, double>> points;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, best = -lo;
    for (const auto& [c, s] : tracker.cache()) {
      if (!std::isfinite(s)) continue;
      points.push_back({encode_candidate(c), s});
      lo = std::min(lo, s);
      hi = std::max(hi, s);
      best = std::max(best, s);
    }
    std::vector<Candidate> pool;
    for (std::size_t k = 0; k < kPool * 8 && pool.size() < kPool; ++k) {
      auto c = sample_candidate(space, rng);
      if (!tracker.seen(c) && std::find(pool.begin(), pool.end(), c) == pool.end()) pool.push_back(c);
    }
    if (pool.empty() || points.empty()) {
      tracker.score(sample_candidate(space, rng));
      continue;
    }
    const double spread = std::max(hi - lo, 1e-9) * 0.5;
    std::size_t pick_idx = 0;
    double pick_ei = -1.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const double ei = expected_improvement(idw_predict(points, encode_candidate(pool[k]), spread), best);
      if (ei > pick_ei) {
        pick_ei = ei;
        pick_idx = k;
      }
    }
    tracker.score(pool[pick_idx]);
  }
  return tracker.finish();
}

/// Simulation-backed solve.
inline SolveResult solve(const ConfigSpace& space, const SystemConfig& base, const Objective& obj,
                         Strategy strategy, std::uint32_t trials, std::uint64_t seed) {
  Evaluator eval = [&](const Candidate& c) { return evaluate(c, base, obj); };
  return solve(space, eval, strategy, trials, seed);
}

inline constexpr std::string_view kSearchLogHeader =
    "trial,e_count,e_tp,e_pp,e_batch,p_count,p_tp,p_pp,p_batch,d_count,d_tp,d_pp,d_batch,policy,irp,gpus,score";

inline void write_search_log(std::ostream& out, const SolveResult& r) {
  out << kSearchLogHeader << '\n';
  for (const auto& e : r.log) {
    out << e.trial;
    for (const auto* s : {&e.candidate.encode, &e.candidate.prefill, &e.candidate.decode})
      out << ',' << s->count << ',' << s->tp << ',' << s->pp << ',' << s->batch;
    out << ',' << to_string(e.candidate.policy) << ',' << (e.candidate.irp ? 1 : 0) << ','
        << gpu_count(e.candidate) << ','
        << (std::isfinite(e.score) ? detail::format_double(e.score) : std::string("-inf")) << '\n';
  }
}

}  // namespace epd
