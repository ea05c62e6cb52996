// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "epd/common.hpp"
#include "epd/model_catalog.hpp"

namespace epd {

/// Coefficients of the analytic per-stage latency model.
struct CostParams {
  Seconds enc_base = 0.0;
  Seconds enc_per_patch = 0.0;
  Seconds prefill_base = 0.0;
  Seconds prefill_per_token = 0.0;
  Seconds prefill_quad = 0.0;  // attention term, per token^2
  Seconds decode_base = 0.0;
  Seconds decode_per_seq = 0.0;
  Seconds decode_per_kv_token = 0.0;
  double tp_efficiency = 1.0;
  double pp_fill_penalty = 0.0;
  Seconds switch_latency_e = 0.7;
  Seconds switch_latency_pd = 0.2;
  // Scales enc_per_patch; > 1 models accelerators with a heavier encoder.
  double encode_heaviness = 1.0;
};

inline void validate(const CostParams& c) {
  const double fields[] = {c.enc_base,          c.enc_per_patch,   c.prefill_base,
                           c.prefill_per_token, c.prefill_quad,    c.decode_base,
                           c.decode_per_seq,    c.decode_per_kv_token,
                           c.pp_fill_penalty,   c.switch_latency_e, c.switch_latency_pd,
                           c.encode_heaviness};
  for (double v : fields) {
    if (!(v >= 0.0)) throw Error(ErrorKind::InvalidArgument, "cost parameters must be >= 0");
  }
  if (!(c.tp_efficiency > 0.0 && c.tp_efficiency <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "tp_efficiency must lie in (0, 1]");
}

/// Efficiency-discounted linear speedup; never exceeds `width`.
inline double tp_speedup(const CostParams& c, std::uint32_t width) {
  if (width <= 1) return 1.0;
  return 1.0 + c.tp_efficiency * static_cast<double>(width - 1);
}

/// Fill/drain overhead of splitting one batch over `pp` pipeline stages.
inline double pp_factor(const CostParams& c, std::uint32_t pp) {
  if (pp <= 1) return 1.0;
  return 1.0 + c.pp_fill_penalty * static_cast<double>(pp - 1);
}

/// Latency of one encode worker processing `patches`. An empty batch costs nothing.
inline Seconds encode_latency(const CostParams& c, std::uint64_t patches, std::uint32_t tp_width) {
  if (patches == 0) return 0.0;
  const double work =
      c.enc_base + c.enc_per_patch * c.encode_heaviness * static_cast<double>(patches);
  return work / tp_speedup(c, tp_width);
}

/// Same as encode_latency, but a non-empty batch with zero patches still pays enc_base.
inline Seconds encode_batch_latency(const CostParams& c, std::uint64_t patches,
                                    std::uint32_t tp_width, std::size_t batch_size) {
  if (batch_size == 0) return 0.0;
  if (patches == 0) return c.enc_base / tp_speedup(c, tp_width);
  return encode_latency(c, patches, tp_width);
}

inline Seconds prefill_latency(const CostParams& c, std::uint64_t total_tokens, std::uint32_t tp,
                               std::uint32_t pp) {
  if (total_tokens == 0)
    throw Error(ErrorKind::InvalidArgument, "prefill needs at least one token");
  const double t = static_cast<double>(total_tokens);
  const double work = c.prefill_base + c.prefill_per_token * t + c.prefill_quad * t * t;
  return work * pp_factor(c, pp) / tp_speedup(c, tp);
}

/// Batched prefill: one base cost, per-sequence linear and attention terms.
inline Seconds prefill_batch_latency(const CostParams& c, std::span<const std::uint64_t> tokens,
                                     std::uint32_t tp, std::uint32_t pp) {
  if (tokens.empty()) return 0.0;
  double work = c.prefill_base;
  for (std::uint64_t n : tokens) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "prefill needs at least one token");
    const double t = static_cast<double>(n);
    work += c.prefill_per_token * t + c.prefill_quad * t * t;
  }
  return work * pp_factor(c, pp) / tp_speedup(c, tp);
}

inline Seconds decode_step_latency(const CostParams& c, std::uint64_t batch,
                                   std::uint64_t resident_kv_tokens) {
  if (batch == 0) throw Error(ErrorKind::InvalidArgument, "decode batch must be >= 1");
  return c.decode_base + c.decode_per_seq * static_cast<double>(batch) +
         c.decode_per_kv_token * static_cast<double>(resident_kv_tokens);
}

inline Seconds decode_step_latency(const CostParams& c, std::uint64_t batch,
                                   std::uint64_t resident_kv_tokens, std::uint32_t tp,
                                   std::uint32_t pp) {
  return decode_step_latency(c, batch, resident_kv_tokens) * pp_factor(c, pp) / tp_speedup(c, tp);
}

enum class Channel { Intra, Inter };

inline Seconds transfer_latency(Bytes bytes, Channel channel, const HardwareSpec& hw) {
  const double bw =
      channel == Channel::Intra ? hw.intra_node_bandwidth : hw.inter_node_bandwidth;
  return static_cast<double>(bytes) / bw + hw.channel_setup;
}

// ---------------------------------------------------------------------------
// Least-squares calibration of the three stage polynomials.

struct EncodeSample {
  double patches;
  Seconds latency;
};
struct PrefillSample {
  double tokens;
  Seconds latency;
};
struct DecodeSample {
  double batch;
  double kv_tokens;
  Seconds latency;
};

namespace detail {

inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (a.rows() < a.cols())
    throw Error(ErrorKind::InvalidArgument, "calibration needs at least as many samples as terms");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols())
    throw Error(ErrorKind::InvalidArgument, "calibration samples are degenerate");
  return qr.solve(b);
}

}  // namespace detail

/// Fits enc_base and enc_per_patch (tp = 1 samples).
inline void calibrate_encode(CostParams& c, std::span<const EncodeSample> samples) {
  Eigen::MatrixXd a(samples.size(), 2);
  Eigen::VectorXd b(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = samples[i].patches;
    b(i) = samples[i].latency;
  }
  const Eigen::VectorXd x = detail::least_squares(a, b);
  c.enc_base = x(0);
  c.enc_per_patch = x(1) / c.encode_heaviness;
}

inline void calibrate_prefill(CostParams& c, std::span<const PrefillSample> samples) {
  Eigen::MatrixXd a(samples.size(), 3);
  Eigen::VectorXd b(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = samples[i].tokens;
    a(i, 2) = samples[i].tokens * samples[i].tokens;
    b(i) = samples[i].latency;
  }
  const Eigen::VectorXd x = detail::least_squares(a, b);
  c.prefill_base = x(0);
  c.prefill_per_token = x(1);
  c.prefill_quad = x(2);
}

inline void calibrate_decode(CostParams& c, std::span<const DecodeSample> samples) {
  Eigen::MatrixXd a(samples.size(), 3);
  Eigen::VectorXd b(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = samples[i].batch;
    a(i, 2) = samples[i].kv_tokens;
    b(i) = samples[i].latency;
  }
  const Eigen::VectorXd x = detail::least_squares(a, b);
  c.decode_base = x(0);
  c.decode_per_seq = x(1);
  c.decode_per_kv_token = x(2);
}

}  // namespace epd
