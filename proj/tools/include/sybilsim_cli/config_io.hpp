#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "sybilsim/simulator.hpp"

namespace sybilsim::cli {

// Strict reader: unknown keys and type mismatches raise ConfigError naming
// the offending key path (e.g. "config.data.spread").
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& doc);

// Fully materialized echo of a config; config_from_json(config_to_json(c))
// reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

nlohmann::json aggregator_to_json(const AggregatorKind& kind, bool krum_auto_f);

// Parses an aggregator label used by `sweep --aggregators`:
// fedavg, krum, multikrum, foolsgold, safl, safl:<nu>, safl:decay.
// Bare "safl" keeps `base`'s SaFL settings when it has any.
AggregatorKind aggregator_from_label(const std::string& label, const AggregatorKind& base);

}  // namespace sybilsim::cli
