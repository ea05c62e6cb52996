// Copyright (C) 2026 The EPD-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// epdsim: command-line front end for the simulator, capacity calculator and
// configuration search. Exit codes: 0 ok, 1 runtime error, 2 infeasible
// configuration, 3 parse error. Errors are also printed to stderr as JSON.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "epd/cli/commands.hpp"

namespace {

void add_experiment_flags(CLI::App* cmd, epd::cli::Options& o) {
  cmd->add_option("--preset", o.preset, "named experiment preset");
  cmd->add_option("--config", o.config, "system config JSON");
  cmd->add_option("--workload", o.workload, "workload spec JSON, or a .csv request trace");
  cmd->add_option("--seed", o.seed, "workload and tie-breaking seed");
  cmd->add_option("--rate", o.rate, "request rate (req/s) for single-rate runs");
  cmd->add_option("--rate-grid", o.rate_grid, "comma-separated sweep rates, e.g. 0.5,1,2");
  cmd->add_option("--role-switch", o.role_switch, "on|off");
  cmd->add_option("--irp", o.irp, "on|off");
  cmd->add_option("--system", o.system, "run only this system of the preset");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace epd;
  CLI::App app{"Encode/prefill/decode disaggregated serving simulator"};
  app.require_subcommand(1);
  cli::Options o;
  app.add_option("--out-dir", o.out_dir, std::string("output directory (default $") + cli::kOutDirEnv + " or .)");

  auto* simulate = app.add_subcommand("simulate", "simulate one workload on each system");
  add_experiment_flags(simulate, o);

  auto* sweep = app.add_subcommand("sweep", "SLO attainment over a rate grid, plus goodput");
  add_experiment_flags(sweep, o);
  auto* goodput = app.add_subcommand("goodput", "alias of sweep");
  add_experiment_flags(goodput, o);

  std::string which;
  auto* ablate = app.add_subcommand("ablate", "paired feature on/off experiments");
  ablate->add_option("which", which, "irp | optimizer | switch")->required();
  ablate->add_option("--seed", o.seed, "seed");
  ablate->add_option("--rate", o.rate, "request rate (irp)");
  ablate->add_option("--rate-grid", o.rate_grid, "goodput grid (optimizer)");
  ablate->add_option("--space", o.space, "config space JSON (optimizer)");
  ablate->add_option("--strategy", o.strategy, "exhaustive | random | surrogate (optimizer)");
  ablate->add_option("--trials", o.trials, "solver evaluations (optimizer)");
  ablate->add_option("--beta", o.beta, "cost weight per GPU (optimizer)")->capture_default_str();

  auto* capacity = app.add_subcommand("capacity", "memory and context limits per deployment shape");
  capacity->add_option("--model", o.model, "catalog model name (default: all)");

  auto* optimize = app.add_subcommand("optimize", "search a configuration space");
  add_experiment_flags(optimize, o);
  optimize->add_option("--space", o.space, "config space JSON, or restricted-appendixB4");
  optimize->add_option("--objective", o.objective, "goodput | neg_mean_ttft | throughput");
  optimize->add_option("--strategy", o.strategy, "exhaustive | random | surrogate");
  optimize->add_option("--trials", o.trials, "evaluations");
  optimize->add_option("--beta", o.beta, "cost weight per GPU")->capture_default_str();

  auto* gen = app.add_subcommand("gen-workload", "write a request trace");
  gen->add_option("--preset", o.preset, "take the workload of a preset");
  gen->add_option("--workload", o.workload, "workload spec JSON");
  gen->add_option("--seed", o.seed, "seed");
  gen->add_option("--rate", o.rate, "request rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::error_record(ErrorKind::ParseError, e.what()).dump() << '\n';
    return 3;
  }

  try {
    if (*simulate) return cli::cmd_simulate(o, std::cout);
    if (*sweep || *goodput) return cli::cmd_sweep(o, std::cout);
    if (*ablate) return cli::cmd_ablate(which, o, std::cout);
    if (*capacity) return cli::cmd_capacity(o, std::cout);
    if (*optimize) return cli::cmd_optimize(o, std::cout);
    if (*gen) return cli::cmd_gen_workload(o, std::cout);
  } catch (const Error& e) {
    std::cerr << cli::error_record(e.kind(), e.what()).dump() << '\n';
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "RuntimeError"}, {"message", e.what()}, {"exit_code", 1}}.dump() << '\n';
    return 1;
  }
  return 1;
}
