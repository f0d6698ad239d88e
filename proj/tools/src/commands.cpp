#include "sybilsim_cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sybilsim/errors.hpp"
#include "sybilsim_cli/artifacts.hpp"
#include "sybilsim_cli/config_io.hpp"
#include "sybilsim_cli/version.hpp"

namespace sybilsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::mutex console_mutex;

template <class... Args>
void say(bool quiet, fmt::format_string<Args...> format, Args&&... args) {
  if (quiet) return;
  std::lock_guard lock(console_mutex);
  fmt::print(format, std::forward<Args>(args)...);
  std::fflush(stdout);
}

void report_error(const std::exception& e) {
  std::lock_guard lock(console_mutex);
  fmt::print(stderr, "sybilsim: error: {}\n", e.what());
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const ConfigError& e) {
    report_error(e);
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error(e);
    return kExitRuntime;
  }
}

ExperimentConfig load_with_overrides(const fs::path& path, const CommonOptions& common) {
  ExperimentConfig cfg = parse_config(path);
  if (common.seed) cfg.seed = *common.seed;
  return cfg;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error("cannot create output directory " + dir.string() +
                (ec ? ": " + ec.message() : std::string()));
  }
}

std::size_t class_count(const ExperimentConfig& cfg) {
  if (const auto* s = std::get_if<SyntheticDataConfig>(&cfg.data.source)) return s->num_classes;
  return 10;  // IDX label files are only read when the simulation starts
}

double final_attack_total(const ExperimentSummary& summary) {
  double total = 0.0;
  for (const auto& a : summary.attacks) total += a.attack_rate;
  return total;
}

double final_attack_total(const fs::path& summary_path) {
  std::ifstream in(summary_path);
  const json doc = json::parse(in);
  double total = 0.0;
  for (const auto& a : doc.at("attacks")) total += a.at("attack_rate").get<double>();
  return total;
}

}  // namespace

const char* to_string(TargetMode mode) { return mode == TargetMode::single ? "single" : "multi"; }

std::string SweepCell::column() const { return aggregator + "/" + to_string(mode); }

fs::path SweepCell::subdir() const {
  std::string agg = aggregator;
  std::replace(agg.begin(), agg.end(), ':', '_');
  return fs::path(to_string(mode)) / agg / ("sybils_" + std::to_string(sybils));
}

ExperimentResult run_to_directory(const ExperimentConfig& cfg, const fs::path& dir, bool quiet,
                                  std::size_t jobs) {
  ensure_directory(dir);
  RunManifest manifest;
  manifest.config = config_to_json(cfg);
  manifest.config_sha256 = config_digest(manifest.config);
  manifest.tool_version = kVersion;
  manifest.master_seed = cfg.seed;
  manifest.started_at = utc_timestamp();

  const std::size_t every = std::max<std::size_t>(1, cfg.rounds / 10);
  ExperimentResult result = run_experiment(
      cfg,
      [&](const RoundRecord& r) {
        if (r.round % every != 0 && r.round != cfg.rounds) return;
        std::string attacks;
        for (double a : r.attack_rates) attacks += fmt::format(" {:.3f}", a);
        say(quiet, "round {:>4}/{}  train_loss {:.5f}  val_acc {:.4f}  attack{}\n", r.round,
            cfg.rounds, r.train_loss, r.val_accuracy, attacks.empty() ? " -" : attacks);
      },
      jobs);

  const std::string csv = rounds_csv(result);
  const std::string summary = summary_json(cfg, result).dump(2) + "\n";
  write_atomic(dir / "rounds.csv", csv);
  write_atomic(dir / "summary.json", summary);

  manifest.finished_at = utc_timestamp();
  manifest.files = {{"rounds.csv", sha256_hex(csv), csv.size()},
                    {"summary.json", sha256_hex(summary), summary.size()}};
  write_atomic(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return result;
}

int cmd_run(const RunOptions& options) {
  return guarded([&] {
    const ExperimentConfig cfg = load_with_overrides(options.config, options.common);
    const auto result = run_to_directory(cfg, options.out, options.common.quiet, options.common.jobs);
    say(options.common.quiet, "wrote {} rounds to {}\n", result.rounds.size(),
        options.out.string());
  });
}

std::vector<int> multi_targets(int source_class, int first_target, std::size_t k,
                               std::size_t num_classes) {
  if (k + 1 > num_classes) {
    throw ConfigError(fmt::format("multi-target mode needs {} distinct targets besides the source "
                                  "class but only {} classes exist",
                                  k, num_classes));
  }
  std::vector<int> out;
  const int n = static_cast<int>(num_classes);
  for (int step = 0; out.size() < k; ++step) {
    const int t = ((first_target + step) % n + n) % n;
    if (t != source_class) out.push_back(t);
  }
  return out;
}

std::vector<SweepCell> plan_sweep(const ExperimentConfig& base, const SweepOptions& options) {
  AdversaryConfig templ;
  if (!base.adversaries.empty()) templ = base.adversaries.front();
  templ.strategy = AttackStrategy::label_flip;
  templ.mimicry_victim.reset();

  std::vector<SweepCell> cells;
  for (TargetMode mode : options.modes) {
    for (const auto& label : options.aggregators) {
      const AggregatorKind kind = aggregator_from_label(label, base.aggregator);
      for (std::size_t k : options.sybils) {
        SweepCell cell{mode, label, k, base};
        cell.config.aggregator = kind;
        if (std::holds_alternative<KrumParams>(kind)) cell.config.krum_auto_f = true;
        AdversaryConfig adv = templ;
        adv.num_sybils = k;
        try {
          if (mode == TargetMode::multi) {
            adv.target_classes =
                multi_targets(adv.source_class, adv.target_classes.front(), k, class_count(base));
          } else {
            adv.target_classes = {adv.target_classes.front()};
          }
          cell.config.adversaries = {adv};
          cell.config.validate();
        } catch (const ConfigError& e) {
          throw ConfigError("cell " + cell.subdir().generic_string() + ": " + e.what());
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

int cmd_sweep(const SweepOptions& options) {
  return guarded([&] {
    const ExperimentConfig base = load_with_overrides(options.config, options.common);
    if (options.sybils.empty() || options.modes.empty() || options.aggregators.empty()) {
      throw ConfigError("sweep needs at least one sybil count, mode and aggregator");
    }
    const auto cells = plan_sweep(base, options);
    ensure_directory(options.out);

    std::vector<double> values(cells.size(), 0.0);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
      while (!failed) {
        const std::size_t i = next++;
        if (i >= cells.size()) return;
        const SweepCell& cell = cells[i];
        const fs::path dir = options.out / cell.subdir();
        try {
          const std::string digest = config_digest(config_to_json(cell.config));
          if (run_is_complete(dir, digest)) {
            values[i] = final_attack_total(dir / "summary.json");
            say(options.common.quiet, "[{}/{}] {} sybils={} already complete\n", i + 1,
                cells.size(), cell.column(), cell.sybils);
            continue;
          }
          const auto result = run_to_directory(cell.config, dir, true, 1);
          values[i] = final_attack_total(result.summary);
          say(options.common.quiet, "[{}/{}] {} sybils={} attack_rate {:.4f}\n", i + 1,
              cells.size(), cell.column(), cell.sybils, values[i]);
        } catch (const std::exception& e) {
          std::lock_guard lock(failure_mutex);
          if (!failed.exchange(true)) {
            const std::string where = "cell " + cell.subdir().generic_string() + ": ";
            if (dynamic_cast<const ConfigError*>(&e)) {
              failure = std::make_exception_ptr(ConfigError(where + e.what()));
            } else {
              failure = std::make_exception_ptr(Error(where + e.what()));
            }
          }
        }
      }
    };

    const std::size_t threads = std::clamp<std::size_t>(options.common.jobs, 1, cells.size());
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    // Columns in first-seen order, rows by sybil count.
    std::vector<std::string> columns;
    std::map<std::size_t, std::map<std::string, double>> matrix;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto column = cells[i].column();
      if (std::find(columns.begin(), columns.end(), column) == columns.end()) {
        columns.push_back(column);
      }
      matrix[cells[i].sybils][column] = values[i];
    }

    std::string csv = "sybils";
    std::string dat = "# sybils";
    for (const auto& c : columns) {
      csv += "," + c;
      dat += " " + c;
    }
    csv += "\n";
    dat += "\n";
    for (const auto& [k, row] : matrix) {
      csv += std::to_string(k);
      dat += std::to_string(k);
      for (const auto& c : columns) {
        csv += "," + format_real(row.at(c));
        dat += " " + format_real(row.at(c));
      }
      csv += "\n";
      dat += "\n";
    }
    write_atomic(options.out / "attack_rate_matrix.csv", csv);
    write_atomic(options.out / "attack_rate_matrix.dat", dat);
    say(options.common.quiet, "wrote {} cells to {}\n", cells.size(), options.out.string());
  });
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string::npos ? text.size() : comma;
    if (end > start) out.push_back(text.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_sybil_range(const std::string& text) {
  auto number = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || value == 0) {
      throw ConfigError("--sybils: \"" + text + "\" is not a range like 1..4 or a list like 1,3");
    }
    return value;
  };
  std::vector<std::size_t> out;
  for (const auto& part : split_list(text)) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(number(part));
      continue;
    }
    const std::size_t lo = number(part.substr(0, dots));
    const std::size_t hi = number(part.substr(dots + 2));
    if (hi < lo) throw ConfigError("--sybils: empty range \"" + part + "\"");
    for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("--sybils: no sybil counts given");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<TargetMode> parse_modes(const std::string& text) {
  std::vector<TargetMode> out;
  for (const auto& m : split_list(text)) {
    if (m == "single") {
      out.push_back(TargetMode::single);
    } else if (m == "multi") {
      out.push_back(TargetMode::multi);
    } else {
      throw ConfigError("--modes: \"" + m + "\" is not single or multi");
    }
  }
  if (out.empty()) throw ConfigError("--modes: no modes given");
  return out;
}

}  // namespace sybilsim::cli
