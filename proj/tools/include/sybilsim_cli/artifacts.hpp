#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sybilsim/simulator.hpp"

namespace sybilsim::cli {

inline constexpr std::string_view kToolName = "sybilsim";
inline constexpr int kSummarySchemaVersion = 1;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string format_real(double value);

// Header plus one line per round record.
std::string rounds_csv(const ExperimentResult& result);

nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

struct FileEntry {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  nlohmann::json config;
  std::string config_sha256;
  std::string tool_version;
  std::uint64_t master_seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<FileEntry> files;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);

// Digest of the canonical config echo; keys are sorted so equal configs hash
// equally.
std::string config_digest(const nlohmann::json& config_echo);

// True when `dir` holds a manifest for `config_sha256` whose inventory
// matches the files on disk.
bool run_is_complete(const std::filesystem::path& dir, const std::string& config_sha256);

std::string utc_timestamp();

}  // namespace sybilsim::cli
