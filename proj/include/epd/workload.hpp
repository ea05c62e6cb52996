// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "epd/common.hpp"
#include "epd/request.hpp"

namespace epd {

struct WorkloadSpec {
  double rate = 1.0;  // requests / second
  std::uint32_t num_requests = 100;
  std::uint32_t prompt_tokens = 22;
  std::uint32_t images_per_request = 0;
  Resolution resolution{};
  std::uint32_t output_tokens = 10;
  std::uint64_t seed = 0;
  SloLimits slo{};
};

inline void validate(const WorkloadSpec& w) {
  if (!(w.rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "rate must be > 0");
  if (w.num_requests < 1) throw Error(ErrorKind::InvalidArgument, "num_requests must be >= 1");
  if (w.output_tokens < 1) throw Error(ErrorKind::InvalidArgument, "output_tokens must be >= 1");
}

/// Exponential inter-arrival gaps by inverse CDF over a 64-bit Mersenne Twister.
/// Both pieces are fully specified, so a seed reproduces the same stream anywhere.
class PoissonArrivals {
 public:
  PoissonArrivals(double rate, std::uint64_t seed) : rate_(rate), engine_(seed) {}

  Seconds next_gap() {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;  // [0, 1)
    return -std::log1p(-u) / rate_;
  }

 private:
  double rate_;
  std::mt19937_64 engine_;
};

namespace detail {

inline std::vector<Request> poisson_requests(const WorkloadSpec& spec,
                                             const std::vector<std::uint32_t>& output_tokens) {
  PoissonArrivals arrivals(spec.rate, spec.seed);
  std::vector<Request> out;
  out.reserve(output_tokens.size());
  Seconds clock = 0.0;
  for (std::size_t i = 0; i < output_tokens.size(); ++i) {
    clock += arrivals.next_gap();
    Request r;
    r.id = i;
    r.arrival = clock;
    r.prompt_tokens = spec.prompt_tokens;
    r.images.assign(spec.images_per_request, spec.resolution);
    r.output_tokens = output_tokens[i];
    r.slo = spec.slo;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

inline std::vector<Request> generate_poisson(const WorkloadSpec& spec) {
  validate(spec);
  return detail::poisson_requests(
      spec, std::vector<std::uint32_t>(spec.num_requests, spec.output_tokens));
}

struct OutputPhase {
  std::uint32_t count = 0;
  std::uint32_t output_tokens = 1;
};

/// Poisson arrivals whose output length switches from `early` to `late` after early.count requests.
inline std::vector<Request> generate_shifted(const WorkloadSpec& spec, OutputPhase early,
                                             OutputPhase late) {
  validate(spec);
  if (early.count + late.count != spec.num_requests)
    throw Error(ErrorKind::InvalidArgument, "phase counts must sum to num_requests");
  if ((early.count > 0 && early.output_tokens < 1) || (late.count > 0 && late.output_tokens < 1))
    throw Error(ErrorKind::InvalidArgument, "output_tokens must be >= 1");
  std::vector<std::uint32_t> lengths(early.count, early.output_tokens);
  lengths.insert(lengths.end(), late.count, late.output_tokens);
  return detail::poisson_requests(spec, lengths);
}

/// TTFT/TPOT limits (seconds) keyed by model and images per request.
inline std::optional<SloLimits> slo_table_lookup(std::string_view model,
                                                  std::uint32_t images_per_request) {
  struct Row {
    std::string_view model;
    std::uint32_t images;
    SloLimits slo;
  };
  static constexpr Row kRows[] = {
      {"MiniCPM-V-2.6", 2, {1.40, 0.04}}, {"MiniCPM-V-2.6", 4, {2.60, 0.04}},
      {"MiniCPM-V-2.6", 6, {3.90, 0.06}}, {"MiniCPM-V-2.6", 8, {5.10, 0.06}},
      {"InternVL2-8B", 2, {1.20, 0.05}},  {"InternVL2-8B", 4, {2.40, 0.06}},
      {"InternVL2-8B", 6, {3.55, 0.09}},  {"InternVL2-8B", 8, {5.00, 0.18}},
      {"InternVL2-26B", 2, {3.50, 0.07}}, {"InternVL2-26B", 4, {7.05, 0.08}},
      {"InternVL2-26B", 6, {11.00, 0.95}}, {"InternVL2-26B", 8, {15.00, 0.15}},
  };
  for (const auto& row : kRows)
    if (row.model == model && row.images == images_per_request) return row.slo;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Trace files: one request per line, comma-separated, named header.

inline constexpr std::string_view kTraceHeader =
    "id,arrival,prompt_tokens,num_images,width,height,output_tokens";

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, std::size_t line_no, std::string_view column) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad value '" +
                                           std::string(text) + "' for column " +
                                           std::string(column));
  return value;
}

}  // namespace detail

struct TraceLoadOptions {
  // When set, arrival times are regenerated from this Poisson process.
  std::optional<double> rate;
  std::uint64_t seed = 0;
  // Applied when the file carries no per-request SLO columns.
  SloLimits default_slo{};
};

inline std::vector<Request> parse_trace(std::istream& in, const TraceLoadOptions& opts = {}) {
  std::vector<Request> out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> columns;
  auto column_index = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return std::nullopt;
  };
  std::optional<std::size_t> idx_id, idx_arrival, idx_prompt, idx_num, idx_w, idx_h, idx_out,
      idx_ttft, idx_tpot;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty() || view.front() == '#') continue;
    auto fields = detail::split_csv(view);
    if (columns.empty()) {
      for (auto f : fields) columns.emplace_back(f);
      idx_id = column_index("id");
      idx_arrival = column_index("arrival");
      idx_prompt = column_index("prompt_tokens");
      idx_num = column_index("num_images");
      idx_w = column_index("width");
      idx_h = column_index("height");
      idx_out = column_index("output_tokens");
      idx_ttft = column_index("ttft_slo");
      idx_tpot = column_index("tpot_slo");
      if (!idx_id || !idx_prompt || !idx_num || !idx_w || !idx_h || !idx_out)
        throw Error(ErrorKind::ParseError,
                    "line " + std::to_string(line_no) + ": header must name " +
                        std::string(kTraceHeader));
      if (!idx_arrival && !opts.rate)
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) +
                                               ": no arrival column and no rate to regenerate");
      continue;
    }
    if (fields.size() != columns.size())
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(columns.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    Request r;
    r.id = detail::parse_field<std::uint64_t>(fields[*idx_id], line_no, "id");
    if (idx_arrival && !opts.rate)
      r.arrival = detail::parse_field<double>(fields[*idx_arrival], line_no, "arrival");
    r.prompt_tokens = detail::parse_field<std::uint32_t>(fields[*idx_prompt], line_no, "prompt_tokens");
    const auto n = detail::parse_field<std::uint32_t>(fields[*idx_num], line_no, "num_images");
    const Resolution res{detail::parse_field<std::uint32_t>(fields[*idx_w], line_no, "width"),
                         detail::parse_field<std::uint32_t>(fields[*idx_h], line_no, "height")};
    r.images.assign(n, res);
    r.output_tokens = detail::parse_field<std::uint32_t>(fields[*idx_out], line_no, "output_tokens");
    r.slo = opts.default_slo;
    if (idx_ttft) r.slo.ttft = detail::parse_field<double>(fields[*idx_ttft], line_no, "ttft_slo");
    if (idx_tpot) r.slo.tpot = detail::parse_field<double>(fields[*idx_tpot], line_no, "tpot_slo");
    if (r.arrival < 0.0 || !std::isfinite(r.arrival))
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": negative arrival");
    if (r.output_tokens < 1)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": output_tokens < 1");
    if (!out.empty() && r.arrival < out.back().arrival)
      throw Error(ErrorKind::ParseError,
                  "line " + std::to_string(line_no) + ": arrivals must be non-decreasing");
    out.push_back(std::move(r));
  }
  if (opts.rate) {
    if (!(*opts.rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "rate must be > 0");
    PoissonArrivals arrivals(*opts.rate, opts.seed);
    Seconds clock = 0.0;
    for (auto& r : out) {
      clock += arrivals.next_gap();
      r.arrival = clock;
    }
  }
  return out;
}

inline std::vector<Request> load_trace(const std::string& path, const TraceLoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open trace file '" + path + "'");
  return parse_trace(in, opts);
}

inline void write_trace(std::ostream& out, const std::vector<Request>& requests) {
  out << kTraceHeader << ",ttft_slo,tpot_slo\n";
  for (const auto& r : requests) {
    const Resolution res = r.images.empty() ? Resolution{} : r.images.front();
    for (const auto& img : r.images)
      if (img != res)
        throw Error(ErrorKind::InvalidArgument,
                    "trace format needs one resolution per request (request " +
                        std::to_string(r.id) + ")");
    out << r.id << ',' << detail::format_double(r.arrival) << ',' << r.prompt_tokens << ','
        << r.images.size() << ',' << res.width << ',' << res.height << ',' << r.output_tokens
        << ',' << detail::format_double(r.slo.ttft) << ',' << detail::format_double(r.slo.tpot)
        << '\n';
  }
}

inline void save_trace(const std::string& path, const std::vector<Request>& requests) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write trace file '" + path + "'");
  write_trace(out, requests);
}

}  // namespace epd
