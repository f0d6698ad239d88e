#include <CLI11.hpp>
#include <fmt/format.h>

#include "sybilsim/errors.hpp"
#include "sybilsim_cli/commands.hpp"
#include "sybilsim_cli/version.hpp"

using namespace sybilsim::cli;

namespace {

void add_common(CLI::App& cmd, CommonOptions& common, std::uint64_t& seed) {
  cmd.add_option("--seed", seed, "Override the config's master seed");
  cmd.add_flag("--quiet", common.quiet, "Suppress progress output");
  cmd.add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning sybil-poisoning simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  RunOptions run;
  std::uint64_t run_seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("--config", run.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  add_common(*run_cmd, run.common, run_seed);

  SweepOptions sweep;
  std::uint64_t sweep_seed = 0;
  std::string sybils = "1..4", modes = "single,multi", aggregators = "fedavg,krum,foolsgold,safl";
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep sybil counts, target modes and aggregators");
  sweep_cmd->add_option("--config", sweep.config, "Base experiment config (JSON)")->required();
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--sybils", sybils, "Sybil counts, e.g. 1..4 or 1,3")->capture_default_str();
  sweep_cmd->add_option("--modes", modes, "single, multi or both")->capture_default_str();
  sweep_cmd
      ->add_option("--aggregators", aggregators,
                   "fedavg, krum, multikrum, foolsgold, safl, safl:<nu>, safl:decay")
      ->capture_default_str();
  add_common(*sweep_cmd, sweep.common, sweep_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run_cmd) {
    if (run_cmd->count("--seed") > 0) run.common.seed = run_seed;
    return cmd_run(run);
  }

  if (sweep_cmd->count("--seed") > 0) sweep.common.seed = sweep_seed;
  try {
    sweep.sybils = parse_sybil_range(sybils);
    sweep.modes = parse_modes(modes);
    sweep.aggregators = split_list(aggregators);
  } catch (const sybilsim::ConfigError& e) {
    fmt::print(stderr, "sybilsim: error: {}\n", e.what());
    return kExitConfig;
  }
  return cmd_sweep(sweep);
}
