// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "epd/common.hpp"
#include "epd/request.hpp"
#include "epd/sim/engine.hpp"
#include "epd/sim/system_config.hpp"
#include "epd/sim/trace.hpp"
#include "epd/workload.hpp"

namespace epd {

struct RequestMetrics {
  Seconds ttft = 0.0;
  Seconds tpot = 0.0;
  bool met_slo = false;
};

inline void require_completed(const sim::RequestRecord& r) {
  if (!r.completed)
    throw Error(ErrorKind::IncompleteRequest, "request " + std::to_string(r.id) + " did not complete");
}

inline Seconds ttft(const sim::RequestRecord& r) {
  require_completed(r);
  return r.first_token - r.arrival;
}

/// Mean gap after the first token; 0 for single-token outputs.
inline Seconds tpot(const sim::RequestRecord& r) {
  require_completed(r);
  if (r.output_tokens < 2) return 0.0;
  return (r.completion - r.first_token) / static_cast<double>(r.output_tokens - 1);
}

/// Rejected or unfinished requests never meet the SLO.
inline bool meets_slo(const sim::RequestRecord& r, const SloLimits& slo) {
  if (!r.completed) return false;
  return ttft(r) <= slo.ttft && tpot(r) <= slo.tpot;
}

inline RequestMetrics request_metrics(const sim::RequestRecord& r,
                                      std::optional<SloLimits> slo = std::nullopt) {
  return {ttft(r), tpot(r), meets_slo(r, slo.value_or(r.slo))};
}

/// Fraction of requests meeting both limits. Each request uses its own limits
/// unless `slo` overrides them.
inline double slo_attainment(std::span<const sim::RequestRecord> records,
                             std::optional<SloLimits> slo = std::nullopt) {
  if (records.empty()) throw Error(ErrorKind::EmptySet, "no requests to score");
  std::size_t met = 0;
  for (const auto& r : records)
    if (meets_slo(r, slo.value_or(r.slo))) ++met;
  return static_cast<double>(met) / static_cast<double>(records.size());
}

inline double slo_attainment(const sim::SimTrace& t, std::optional<SloLimits> slo = std::nullopt) {
  return slo_attainment(std::span<const sim::RequestRecord>(t.requests), slo);
}

/// Nearest-rank percentile, p in (0, 100].
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::EmptySet, "percentile of an empty set");
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorKind::InvalidArgument, "percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

struct LatencySummary {
  std::size_t completed = 0;
  Seconds mean_ttft = 0.0;
  Seconds p99_ttft = 0.0;
  Seconds mean_tpot = 0.0;
  Seconds makespan = 0.0;
};

inline LatencySummary summarize(const sim::SimTrace& t) {
  LatencySummary s;
  std::vector<double> ttfts;
  double tpot_sum = 0.0;
  for (const auto& r : t.requests) {
    if (!r.completed) continue;
    ttfts.push_back(ttft(r));
    tpot_sum += tpot(r);
  }
  s.completed = ttfts.size();
  s.makespan = t.makespan;
  if (ttfts.empty()) return s;
  s.mean_ttft = std::accumulate(ttfts.begin(), ttfts.end(), 0.0) / static_cast<double>(ttfts.size());
  s.p99_ttft = percentile(ttfts, 99.0);
  s.mean_tpot = tpot_sum / static_cast<double>(ttfts.size());
  return s;
}

// ---------------------------------------------------------------------------
// Rate sweeps and goodput.

inline constexpr double kGoodputThreshold = 0.9;

struct SweepPoint {
  double rate = 0.0;
  double attainment = 0.0;
  Seconds mean_ttft = 0.0;
  Seconds p99_ttft = 0.0;
  Seconds mean_tpot = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
};

inline void validate_rate_grid(std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "rate grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw Error(ErrorKind::InvalidArgument, "rates must be > 0");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "rate grid must be strictly increasing");
  }
}

/// Largest rate whose attainment reaches `threshold`; 0 when none does.
/// Scans every point because attainment need not be monotone in rate.
inline double goodput_from_profile(std::span<const double> rates, std::span<const double> attainment,
                                   double threshold = kGoodputThreshold) {
  if (rates.size() != attainment.size())
    throw Error(ErrorKind::InvalidArgument, "rates and attainment differ in length");
  double best = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i)
    if (attainment[i] >= threshold) best = std::max(best, rates[i]);
  return best;
}

inline double goodput_from_sweep(const SweepResult& s, double threshold = kGoodputThreshold) {
  std::vector<double> rates, att;
  for (const auto& p : s.points) {
    rates.push_back(p.rate);
    att.push_back(p.attainment);
  }
  return goodput_from_profile(rates, att, threshold);
}

/// One simulation per grid rate, all on the workload seed in `spec`.
inline SweepResult sweep(const SystemConfig& config, WorkloadSpec spec, std::span<const double> rate_grid,
                         std::optional<SloLimits> slo = std::nullopt) {
  validate_rate_grid(rate_grid);
  SweepResult out;
  for (double rate : rate_grid) {
    spec.rate = rate;
    const auto trace = sim::run_simulation(config, generate_poisson(spec), spec.seed);
    const auto sum = summarize(trace);
    out.points.push_back({rate, slo_attainment(trace, slo), sum.mean_ttft, sum.p99_ttft, sum.mean_tpot});
  }
  return out;
}

inline double goodput(const SystemConfig& config, const WorkloadSpec& spec, std::span<const double> rate_grid,
                      std::optional<SloLimits> slo = std::nullopt, double threshold = kGoodputThreshold) {
  return goodput_from_sweep(sweep(config, spec, rate_grid, slo), threshold);
}

inline double per_gpu_rate(double rate, std::uint32_t gpus) {
  if (gpus == 0) throw Error(ErrorKind::InvalidArgument, "gpu count must be > 0");
  return rate / static_cast<double>(gpus);
}

inline constexpr std::string_view kSweepHeader =
    "system,model,images_per_request,rate_per_gpu,attainment,rate,mean_ttft,p99_ttft,mean_tpot";

struct SweepLabel {
  std::string system;
  std::string model;
  std::uint32_t images_per_request = 0;
  std::uint32_t gpus = 1;
};

inline void write_sweep_rows(std::ostream& out, const SweepResult& s, const SweepLabel& label) {
  using detail::format_double;
  for (const auto& p : s.points) {
    out << label.system << ',' << label.model << ',' << label.images_per_request << ','
        << format_double(per_gpu_rate(p.rate, label.gpus)) << ',' << format_double(p.attainment) << ','
        << format_double(p.rate) << ',' << format_double(p.mean_ttft) << ',' << format_double(p.p99_ttft)
        << ',' << format_double(p.mean_tpot) << '\n';
  }
}

inline constexpr std::string_view kSummaryHeader =
    "request_id,arrival,status,ttft,tpot,completion,output_tokens,met_slo";

/// One row per request.
inline void write_summary(std::ostream& out, const sim::SimTrace& t) {
  using detail::format_double;
  out << kSummaryHeader << '\n';
  for (const auto& r : t.requests) {
    out << r.id << ',' << format_double(r.arrival) << ',';
    if (!r.completed) {
      out << (r.rejected ? "rejected" : "incomplete") << ",,,,"  << r.output_tokens << ",0\n";
      continue;
    }
    out << "completed," << format_double(ttft(r)) << ',' << format_double(tpot(r)) << ','
        << format_double(r.completion) << ',' << r.output_tokens << ',' << (meets_slo(r, r.slo) ? 1 : 0)
        << '\n';
  }
}

}  // namespace epd
