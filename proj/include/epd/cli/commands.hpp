// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "epd/capacity.hpp"
#include "epd/io.hpp"
#include "epd/metrics.hpp"
#include "epd/optimizer.hpp"
#include "epd/presets.hpp"
#include "epd/sim/engine.hpp"
#include "epd/sim/scheduling.hpp"
#include "epd/workload.hpp"

namespace epd::cli {

inline constexpr const char* kOutDirEnv = "EPDSIM_OUT_DIR";

/// Cost weight per GPU: about 5% of a 1 req/s goodput score.
inline constexpr double kDefaultBeta = 0.05;

/// Flags shared by every subcommand. Empty strings mean "not given".
struct Options {
  std::string preset;
  std::string config;
  std::string workload;
  std::string out_dir;
  std::string rate_grid;
  std::string role_switch;  // "on" | "off"
  std::string irp;          // "on" | "off"
  std::string system;       // restrict a preset to one named system
  std::optional<std::uint64_t> seed;
  std::optional<double> rate;
  // optimize / ablate optimizer
  std::string space;
  std::string objective = "goodput";
  std::string strategy = "surrogate";
  double beta = kDefaultBeta;
  std::uint32_t trials = 30;
  // capacity
  std::string model;
};

/// Exit status per error kind.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigInfeasible:
    case ErrorKind::EmptyFeasibleSet: return 2;
    case ErrorKind::ParseError: return 3;
    default: return 1;
  }
}

inline Json error_record(ErrorKind k, const std::string& message) {
  return {{"error", std::string(to_string(k))}, {"message", message}, {"exit_code", exit_code(k)}};
}

inline std::vector<double> parse_rate_grid(const std::string& text) {
  std::vector<double> out;
  for (auto field : detail::split_csv(text)) {
    if (field.empty()) throw Error(ErrorKind::ParseError, "empty value in rate grid '" + text + "'");
    out.push_back(detail::parse_field<double>(field, 0, "rate"));
  }
  validate_rate_grid(out);
  return out;
}

inline bool parse_on_off(const std::string& text, const char* flag) {
  if (text == "on") return true;
  if (text == "off") return false;
  throw Error(ErrorKind::ParseError, std::string(flag) + " must be 'on' or 'off', got '" + text + "'");
}

/// `--space` takes a JSON file or the name of a shipped space.
inline ConfigSpace load_space(const std::string& text) {
  if (text == presets::kRestrictedSpaceName) return presets::restricted_space();
  return load<ConfigSpace>(text);
}

inline std::filesystem::path out_dir(const Options& o) {
  std::filesystem::path dir = ".";
  if (!o.out_dir.empty()) dir = o.out_dir;
  else if (const char* env = std::getenv(kOutDirEnv); env && *env) dir = env;
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool is_trace_file(const std::string& path) {
  return std::filesystem::path(path).extension() == ".csv";
}

/// Builds the experiment a command runs: a named preset, or a single system
/// from --config, then applies the command-line overrides.
inline presets::ExperimentPreset resolve(const Options& o) {
  presets::ExperimentPreset p;
  if (!o.preset.empty() && !o.config.empty())
    throw Error(ErrorKind::InvalidArgument, "give either --preset or --config, not both");
  if (!o.preset.empty()) {
    p = presets::by_name(o.preset);
  } else if (!o.config.empty()) {
    const auto cfg = load<SystemConfig>(o.config);
    p.name = std::filesystem::path(o.config).stem().string();
    p.model = cfg.model;
    p.systems = {{"custom", cfg}};
    p.rate_grid = {p.workload.rate};
  } else {
    throw Error(ErrorKind::InvalidArgument, "one of --preset or --config is required");
  }
  if (!o.workload.empty() && !is_trace_file(o.workload)) {
    p.workload = load<WorkloadSpec>(o.workload);
    p.seed = p.workload.seed;
  }
  if (p.workload.slo == SloLimits{}) {
    if (auto slo = slo_table_lookup(p.model.name, p.workload.images_per_request)) p.workload.slo = *slo;
  }
  if (!(p.workload.slo == SloLimits{})) p.slo = p.workload.slo;
  if (o.seed) p.seed = *o.seed;
  if (o.rate) p.workload.rate = *o.rate;
  if (!o.rate_grid.empty()) p.rate_grid = parse_rate_grid(o.rate_grid);
  for (auto& s : p.systems) {
    if (!o.role_switch.empty()) {
      if (parse_on_off(o.role_switch, "--role-switch")) {
        if (!s.config.role_switch) s.config.role_switch = ControllerParams{};
      } else {
        s.config.role_switch.reset();
      }
    }
    if (!o.irp.empty()) s.config.irp_enabled = parse_on_off(o.irp, "--irp");
  }
  if (!o.system.empty()) {
    std::erase_if(p.systems, [&](const auto& s) { return s.name != o.system; });
    if (p.systems.empty()) throw Error(ErrorKind::InvalidArgument, "preset has no system '" + o.system + "'");
  }
  return p;
}

inline std::vector<Request> resolve_workload(const Options& o, const presets::ExperimentPreset& p) {
  if (!o.workload.empty() && is_trace_file(o.workload)) return load_trace(o.workload);
  return presets::workload_of(p);
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes `body` to `dir/name` and a `name.meta.json` sidecar next to it.
/// The body never carries timestamps, so equal inputs give equal bytes.
inline std::filesystem::path write_artifact(const std::filesystem::path& dir, const std::string& name,
                                            const std::string& body, Json meta) {
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path.string() + "'");
  out << body;
  meta["file"] = name;
  meta["generated_at"] = utc_now();
  if (meta.contains("config")) meta["config_hash"] = config_hash(meta["config"]);
  save_json(path.string() + ".meta.json", meta);
  return path;
}

inline Json base_meta(const std::string& command, const presets::ExperimentPreset& p) {
  return {{"command", command}, {"preset", p.name}, {"seed", p.seed}, {"workload", p.workload},
          {"slo", p.slo},       {"rate_grid", p.rate_grid}};
}

inline Json systems_json(const presets::ExperimentPreset& p) {
  Json j = Json::object();
  for (const auto& s : p.systems) j[s.name] = s.config;
  return j;
}

// ---- simulate --------------------------------------------------------------

inline int cmd_simulate(const Options& o, std::ostream& log) {
  const auto p = resolve(o);
  const auto requests = resolve_workload(o, p);
  const auto dir = out_dir(o);
  for (const auto& s : p.systems) {
    sim::validate_deployable(s.config);
    const auto trace = sim::run_simulation(s.config, requests, p.seed);
    Json meta = base_meta("simulate", p);
    meta["system"] = s.name;
    meta["config"] = s.config;
    std::ostringstream summary, events;
    write_summary(summary, trace);
    sim::write_event_records(events, trace);
    write_artifact(dir, s.name + "_summary.csv", summary.str(), meta);
    write_artifact(dir, s.name + "_events.csv", events.str(), meta);
    if (s.config.role_switch) {
      std::ostringstream sw;
      sim::write_switch_log(sw, trace);
      write_artifact(dir, s.name + "_switches.csv", sw.str(), meta);
    }
    const auto sum = summarize(trace);
    log << s.name << ": completed " << sum.completed << "/" << trace.requests.size() << ", mean TTFT "
        << detail::format_double(sum.mean_ttft) << " s, p99 TTFT " << detail::format_double(sum.p99_ttft)
        << " s, mean TPOT " << detail::format_double(sum.mean_tpot) << " s, attainment "
        << detail::format_double(slo_attainment(trace)) << ", makespan " << detail::format_double(trace.makespan)
        << " s\n";
  }
  return 0;
}

// ---- sweep / goodput -------------------------------------------------------

inline int cmd_sweep(const Options& o, std::ostream& log) {
  const auto p = resolve(o);
  const auto dir = out_dir(o);
  WorkloadSpec spec = p.workload;
  spec.seed = p.seed;
  std::ostringstream good;
  good << "system,gpus,goodput,goodput_per_gpu\n";
  for (const auto& s : p.systems) {
    sim::validate_deployable(s.config);
    const auto result = sweep(s.config, spec, p.rate_grid, p.slo);
    const auto gpus = gpus_used(s.config.instances);
    std::ostringstream body;
    body << kSweepHeader << '\n';
    write_sweep_rows(body, result, {s.name, p.model.name, spec.images_per_request, gpus});
    Json meta = base_meta("sweep", p);
    meta["system"] = s.name;
    meta["config"] = s.config;
    meta["goodput_threshold"] = kGoodputThreshold;
    write_artifact(dir, "sweep_" + s.name + ".csv", body.str(), meta);
    const double g = goodput_from_sweep(result);
    good << s.name << ',' << gpus << ',' << detail::format_double(g) << ','
         << detail::format_double(per_gpu_rate(g, gpus)) << '\n';
    log << s.name << ": goodput " << detail::format_double(g) << " req/s (" << detail::format_double(per_gpu_rate(g, gpus))
        << " per GPU)\n";
  }
  Json meta = base_meta("goodput", p);
  meta["config"] = systems_json(p);
  meta["goodput_threshold"] = kGoodputThreshold;
  write_artifact(dir, "goodput.csv", good.str(), meta);
  return 0;
}

// ---- ablations -------------------------------------------------------------

inline double mean_ttft_of(const SystemConfig& cfg, const std::vector<Request>& w, std::uint64_t seed) {
  return summarize(sim::run_simulation(cfg, w, seed)).mean_ttft;
}

struct IrpRow {
  std::uint32_t images = 0;
  double ttft_on = 0.0;
  double ttft_off = 0.0;
};

inline std::vector<IrpRow> irp_ablation_rows(std::uint64_t seed, std::optional<double> rate = std::nullopt) {
  std::vector<IrpRow> rows;
  for (std::uint32_t images : {2u, 4u, 6u, 8u}) {
    auto p = presets::irp_ablation(images);
    p.seed = seed;
    if (rate) p.workload.rate = *rate;
    const auto w = presets::workload_of(p);
    rows.push_back({images, mean_ttft_of(p.systems[0].config, w, seed), mean_ttft_of(p.systems[1].config, w, seed)});
  }
  return rows;
}

struct OptimizerAblation {
  SolveResult solver;
  double solver_goodput = 0.0;  // best config's goodput without the cost term
  std::vector<std::pair<Candidate, double>> random;
  double random_mean = 0.0;
};

inline OptimizerAblation optimizer_ablation_run(const presets::ExperimentPreset& p, Strategy strategy,
                                                std::uint32_t trials, std::uint64_t seed, double beta = 0.0) {
  Objective obj;
  obj.workload = p.workload;
  obj.workload.seed = p.seed;
  obj.rate_grid = p.rate_grid;
  obj.slo = p.slo;
  obj.beta = beta;
  const auto& base = p.systems.front().config;
  OptimizerAblation out;
  out.solver = solve(*p.space, base, obj, strategy, trials, seed);
  out.solver_goodput =
      out.solver.best_score + beta * cost(to_system_config(out.solver.best, base).instances, obj.cost_per_gpu);
  obj.beta = 0.0;
  for (const auto& c : sample_uniform(*p.space, 10, seed + 1)) {
    // Infeasible draws contribute zero goodput.
    const double g = std::max(0.0, evaluate(c, base, obj));
    out.random.push_back({c, g});
    out.random_mean += g / 10.0;
  }
  return out;
}

struct SwitchAblation {
  sim::SimTrace on;
  sim::SimTrace off;
};

inline SwitchAblation switch_ablation_run(const presets::ExperimentPreset& p) {
  const auto w = presets::workload_of(p);
  return {sim::run_simulation(p.systems[0].config, w, p.seed), sim::run_simulation(p.systems[1].config, w, p.seed)};
}

inline std::string stage_shorthand(const std::array<std::uint32_t, 3>& c) {
  return std::to_string(c[0]) + "E" + std::to_string(c[1]) + "P" + std::to_string(c[2]) + "D";
}

inline int cmd_ablate(const std::string& which, const Options& o, std::ostream& log) {
  const auto dir = out_dir(o);
  const std::uint64_t seed = o.seed.value_or(0);
  if (which == "irp") {
    const auto rows = irp_ablation_rows(seed, o.rate);
    std::ostringstream body;
    body << "images_per_request,mean_ttft_irp,mean_ttft_no_irp,ratio\n";
    for (const auto& r : rows) {
      body << r.images << ',' << detail::format_double(r.ttft_on) << ',' << detail::format_double(r.ttft_off) << ','
           << detail::format_double(r.ttft_off / r.ttft_on) << '\n';
      log << r.images << " images: TTFT without IRP is " << detail::format_double(r.ttft_off / r.ttft_on)
          << "x the TTFT with IRP\n";
    }
    auto p = presets::irp_ablation(4);
    p.seed = seed;
    Json meta = base_meta("ablate irp", p);
    meta["config"] = systems_json(p);
    write_artifact(dir, "ablate_irp.csv", body.str(), meta);
    return 0;
  }
  if (which == "optimizer") {
    auto p = presets::optimizer_ablation();
    p.seed = seed;
    if (!o.space.empty()) p.space = load_space(o.space);
    if (!o.rate_grid.empty()) p.rate_grid = parse_rate_grid(o.rate_grid);
    const auto r = optimizer_ablation_run(p, parse_strategy(o.strategy), o.trials, seed, o.beta);
    std::ostringstream body;
    body << "label,config,goodput\n";
    body << "solver," << describe(r.solver.best) << ',' << detail::format_double(r.solver_goodput) << '\n';
    for (std::size_t i = 0; i < r.random.size(); ++i)
      body << "random" << i << ',' << describe(r.random[i].first) << ',' << detail::format_double(r.random[i].second)
           << '\n';
    Json meta = base_meta("ablate optimizer", p);
    meta["config"] = {{"base", p.systems.front().config}, {"space", *p.space}};
    meta["random_mean_goodput"] = r.random_mean;
    meta["beta"] = o.beta;
    meta["trials"] = o.trials;
    write_artifact(dir, "ablate_optimizer.csv", body.str(), meta);
    log << "solver: " << describe(r.solver.best) << " goodput " << detail::format_double(r.solver_goodput)
        << "; random mean " << detail::format_double(r.random_mean) << '\n';
    return 0;
  }
  if (which == "switch") {
    auto p = presets::switch_ablation();
    p.seed = seed;
    const auto r = switch_ablation_run(p);
    std::ostringstream body;
    body << "system,completed,makespan,mean_ttft,mean_tpot,final_config\n";
    for (const auto& [name, t] : {std::pair{"switch-on", &r.on}, std::pair{"switch-off", &r.off}}) {
      const auto s = summarize(*t);
      body << name << ',' << s.completed << ',' << detail::format_double(s.makespan) << ','
           << detail::format_double(s.mean_ttft) << ',' << detail::format_double(s.mean_tpot) << ','
           << stage_shorthand(sim::final_stage_counts(*t)) << '\n';
    }
    Json meta = base_meta("ablate switch", p);
    meta["config"] = systems_json(p);
    write_artifact(dir, "ablate_switch.csv", body.str(), meta);
    std::ostringstream sw;
    sim::write_switch_log(sw, r.on);
    write_artifact(dir, "ablate_switch_log.csv", sw.str(), meta);
    log << "makespan with switching / without: " << detail::format_double(r.on.makespan / r.off.makespan)
        << ", final " << stage_shorthand(sim::final_stage_counts(r.on)) << '\n';
    return 0;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown ablation '" + which + "' (irp, optimizer, switch)");
}

// ---- capacity --------------------------------------------------------------

inline constexpr std::string_view kCapacityHeader = "model,shape,resolution,metric,value,limiting_factor";

inline std::string capacity_value(const std::optional<std::uint64_t>& v, const CapacityReport& r) {
  if (v) return std::to_string(*v);
  return r.oocl ? "OOCL" : "OOM";
}

/// Capacity table for one model: image limits per resolution, stage batch
/// limits under the heavy profile, KV fraction limits, and weight reduction.
inline void write_capacity_rows(std::ostream& out, const ModelSpec& m, const HardwareSpec& hw) {
  const StageRole shapes[] = {StageRole::EncodePrefill, StageRole::Encode};
  for (auto role : shapes) {
    DeploymentShape s;
    s.role = role;
    s.kv_fraction = 0.8;
    for (const auto& [res, _] : m.patch_table) {
      const auto r = max_images_per_request(m, hw, s, res);
      out << m.name << ',' << to_string(role) << ',' << to_string(res) << ",max_images_per_request,"
          << capacity_value(r.max_images_per_request, r) << ',' << to_string(r.limiting_factor) << '\n';
    }
    const auto hs = presets::heavy_shape(role);
    const auto b = max_batch(m, hw, hs, presets::kHeavyImages, presets::kHeavyResolution);
    out << m.name << ',' << to_string(role) << ',' << to_string(presets::kHeavyResolution) << ",max_batch,"
        << capacity_value(b.max_batch, b) << ',' << to_string(b.limiting_factor) << '\n';
  }
  for (std::uint64_t images : {1u, 5u, 10u, 20u, 30u}) {
    for (auto role : {StageRole::EncodePrefill, StageRole::Prefill}) {
      DeploymentShape s;
      s.role = role;
      s.mm_cache_tokens = 3000;
      const auto r = max_kv_fraction(m, hw, s, images, models::k4K);
      std::string v = r.max_kv_fraction ? detail::format_double(*r.max_kv_fraction) : (r.oocl ? "OOCL" : "OOM");
      out << m.name << ',' << to_string(role) << ',' << to_string(models::k4K) << ",max_kv_fraction@" << images
          << "img," << v << ',' << to_string(r.limiting_factor) << '\n';
    }
  }
  out << m.name << ",Encode,-,encode_weight_reduction," << detail::format_double(encode_weight_reduction(m))
      << ",-\n";
}

inline int cmd_capacity(const Options& o, std::ostream& log) {
  const auto dir = out_dir(o);
  std::vector<ModelSpec> ms;
  if (o.model.empty()) ms = models::all();
  else ms = {models::by_name(o.model)};
  const auto hw = models::a100_node();
  std::ostringstream body;
  body << kCapacityHeader << '\n';
  for (const auto& m : ms) write_capacity_rows(body, m, hw);
  Json meta = {{"command", "capacity"}, {"hardware", hw}};
  Json models_json = Json::array();
  for (const auto& m : ms) models_json.push_back(m);
  meta["config"] = {{"models", models_json}, {"hardware", hw}};
  write_artifact(dir, "capacity.csv", body.str(), meta);
  log << body.str();
  return 0;
}

// ---- optimize --------------------------------------------------------------

inline int cmd_optimize(const Options& o, std::ostream& log) {
  Options with_default = o;
  if (o.preset.empty() && o.config.empty()) with_default.preset = "optimizer-ablation";
  auto p = resolve(with_default);
  if (!o.space.empty()) p.space = load_space(o.space);
  if (!p.space) p.space = presets::restricted_space();
  Objective obj;
  obj.metric = parse_metric(o.objective);
  obj.beta = o.beta;
  obj.workload = p.workload;
  obj.workload.seed = p.seed;
  obj.rate_grid = p.rate_grid;
  obj.slo = p.slo;
  const auto& base = p.systems.front().config;
  const auto r = solve(*p.space, base, obj, parse_strategy(o.strategy), o.trials, p.seed);
  const auto dir = out_dir(o);
  std::ostringstream body;
  write_search_log(body, r);
  Json meta = base_meta("optimize", p);
  meta["config"] = {{"base", base}, {"space", *p.space}};
  meta["objective"] = {{"metric", std::string(to_string(obj.metric))}, {"beta", obj.beta}};
  meta["strategy"] = o.strategy;
  meta["trials"] = o.trials;
  write_artifact(dir, "search_log.csv", body.str(), meta);
  save_json((dir / "best_config.json").string(), Json(to_system_config(r.best, base)));
  log << "best " << describe(r.best) << " score " << detail::format_double(r.best_score) << " ("
      << r.distinct_evaluations << " distinct evaluations)\n";
  return 0;
}

// ---- gen-workload ----------------------------------------------------------

inline int cmd_gen_workload(const Options& o, std::ostream& log) {
  presets::ExperimentPreset p;
  if (!o.preset.empty()) p = presets::by_name(o.preset);
  if (!o.workload.empty()) {
    p.workload = load<WorkloadSpec>(o.workload);
    p.seed = p.workload.seed;
  }
  if (o.seed) p.seed = *o.seed;
  if (o.rate) p.workload.rate = *o.rate;
  const auto requests = presets::workload_of(p);
  std::ostringstream body;
  write_trace(body, requests);
  Json meta = {{"command", "gen-workload"}, {"preset", p.name}, {"seed", p.seed}};
  meta["config"] = p.workload;
  write_artifact(out_dir(o), "workload.csv", body.str(), meta);
  log << "wrote " << requests.size() << " requests\n";
  return 0;
}

}  // namespace epd::cli
