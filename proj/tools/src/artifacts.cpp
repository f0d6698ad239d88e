#include "sybilsim_cli/artifacts.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <system_error>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "sybilsim/errors.hpp"
#include "sybilsim_cli/config_io.hpp"
#include "sybilsim_cli/version.hpp"

namespace sybilsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

void write_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string format_real(double value) { return fmt::format("{:.17g}", value); }

namespace {

std::string attack_column(const AttackReport& a) {
  return fmt::format("attack_rate_a{}_{}to{}", a.adversary, a.source_class, a.target_class);
}

std::string optional_real(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string("NA");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string rounds_csv(const ExperimentResult& result) {
  std::string out = "round,train_loss,val_loss";
  for (const auto& a : result.summary.attacks) out += "," + attack_column(a);
  out += ",est_poison_rate,true_poison_rate,threshold,train_accuracy,val_accuracy\n";
  for (const auto& r : result.rounds) {
    out += fmt::format("{},{},{}", r.round, format_real(r.train_loss), format_real(r.val_loss));
    for (double rate : r.attack_rates) out += "," + format_real(rate);
    out += fmt::format(",{},{},{},{},{}\n", optional_real(r.estimated_poisoning_rate),
                       format_real(r.true_poisoning_rate), optional_real(r.threshold),
                       format_real(r.train_accuracy), format_real(r.val_accuracy));
  }
  return out;
}

json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  const auto& s = result.summary;
  json out;
  out["schema_version"] = kSummarySchemaVersion;
  out["tool"] = kToolName;
  out["tool_version"] = kVersion;
  out["config"] = config_to_json(cfg);
  out["aggregator"] = aggregator_name(cfg.aggregator);
  out["rounds"] = s.rounds;
  out["final"] = {{"train_loss", s.final_train_loss},
                  {"val_loss", s.final_val_loss},
                  {"train_accuracy", s.final_train_accuracy},
                  {"val_accuracy", s.final_val_accuracy},
                  {"true_poison_rate", s.final_true_poisoning_rate},
                  {"est_poison_rate", optional_json(s.final_estimated_poisoning_rate)}};

  json attacks = json::array();
  for (const auto& a : s.attacks) {
    attacks.push_back({{"adversary", a.adversary},
                       {"source_class", a.source_class},
                       {"target_class", a.target_class},
                       {"attack_rate", a.attack_rate},
                       {"protection_rate", a.protection_rate()}});
  }
  out["attacks"] = attacks;

  json diagnostics = json::array();
  for (const auto& r : result.rounds) {
    json d;
    d["round"] = r.round;
    d["active_clients"] = r.active_clients;
    d["threshold"] = optional_json(r.threshold);
    if (r.partition) {
      d["groups"] = r.partition->groups;
      d["singletons"] = r.partition->singletons;
    } else {
      d["groups"] = nullptr;
      d["singletons"] = nullptr;
    }
    d["foolsgold_weights"] = r.foolsgold_weights ? json(*r.foolsgold_weights) : json(nullptr);
    if (r.krum) {
      d["krum_scores"] = r.krum->scores;
      d["krum_selected"] = r.krum->selected;
    } else {
      d["krum_scores"] = nullptr;
      d["krum_selected"] = nullptr;
    }
    diagnostics.push_back(std::move(d));
  }
  out["diagnostics"] = diagnostics;
  return out;
}

json manifest_to_json(const RunManifest& m) {
  json files = json::array();
  for (const auto& f : m.files) {
    files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  return {{"tool", kToolName},
          {"tool_version", m.tool_version},
          {"master_seed", m.master_seed},
          {"config", m.config},
          {"config_sha256", m.config_sha256},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"files", files}};
}

RunManifest manifest_from_json(const json& doc) {
  RunManifest m;
  m.config = doc.at("config");
  m.config_sha256 = doc.at("config_sha256").get<std::string>();
  m.tool_version = doc.at("tool_version").get<std::string>();
  m.master_seed = doc.at("master_seed").get<std::uint64_t>();
  m.started_at = doc.at("started_at").get<std::string>();
  m.finished_at = doc.at("finished_at").get<std::string>();
  for (const auto& f : doc.at("files")) {
    m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                       f.at("bytes").get<std::uintmax_t>()});
  }
  return m;
}

std::string config_digest(const json& config_echo) { return sha256_hex(config_echo.dump()); }

bool run_is_complete(const fs::path& dir, const std::string& config_sha256) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) return false;
  try {
    std::ifstream in(manifest_path);
    const RunManifest m = manifest_from_json(json::parse(in));
    if (m.config_sha256 != config_sha256 || m.files.empty()) return false;
    for (const auto& f : m.files) {
      const fs::path p = dir / f.path;
      if (!fs::exists(p) || sha256_file(p) != f.sha256) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

}  // namespace sybilsim::cli
