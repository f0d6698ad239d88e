#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sybilsim/simulator.hpp"

namespace sybilsim::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::size_t jobs = 1;
};

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  CommonOptions common;
};

enum class TargetMode { single, multi };

struct SweepOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<std::size_t> sybils{1, 2, 3, 4};
  std::vector<TargetMode> modes{TargetMode::single, TargetMode::multi};
  std::vector<std::string> aggregators{"fedavg", "krum", "foolsgold", "safl"};
  CommonOptions common;
};

struct SweepCell {
  TargetMode mode = TargetMode::single;
  std::string aggregator;  // label as given on the command line
  std::size_t sybils = 1;
  ExperimentConfig config;

  std::string column() const;               // "<aggregator>/<mode>"
  std::filesystem::path subdir() const;     // "<mode>/<aggregator>/sybils_<k>"
};

// Both return a process exit code; errors are reported on standard error.
int cmd_run(const RunOptions& options);
int cmd_sweep(const SweepOptions& options);

// Runs one experiment and writes rounds.csv, summary.json and manifest.json
// into `dir`. Throws on failure.
ExperimentResult run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                  bool quiet, std::size_t jobs);

// Cross-product in matrix order: modes, then aggregators, then sybil counts.
std::vector<SweepCell> plan_sweep(const ExperimentConfig& base, const SweepOptions& options);

// Multi-target targets for k sybils: k distinct classes other than the
// source, starting at `first_target` and wrapping around.
std::vector<int> multi_targets(int source_class, int first_target, std::size_t k,
                               std::size_t num_classes);

std::vector<std::size_t> parse_sybil_range(const std::string& text);
std::vector<TargetMode> parse_modes(const std::string& text);
std::vector<std::string> split_list(const std::string& text);
const char* to_string(TargetMode mode);

}  // namespace sybilsim::cli
