#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sybilsim/aggregation.hpp"
#include "sybilsim/data.hpp"
#include "sybilsim/metrics.hpp"
#include "sybilsim/model.hpp"

namespace sybilsim {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SyntheticDataConfig {
  std::size_t num_classes = 10;
  std::size_t input_dim = 32;
  std::size_t per_class = 100;
  double spread = 0.2;
};

struct IdxDataConfig {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t limit_per_class = 100;
  std::size_t test_limit_per_class = 20;
};

struct DataConfig {
  std::variant<SyntheticDataConfig, IdxDataConfig> source = SyntheticDataConfig{};
  bool duplicate_poison_data = false;
};

enum class AttackStrategy { label_flip, mimicry };

// One attacker controlling `num_sybils` colluding identities.
//
// Single-target: one entry in target_classes, shared by every sybil.
// Multi-target: one distinct target per sybil.
// Mimicry: the first sybil replays the victim's update every round and the
// remaining sybils carry the label-flipped poison.
struct AdversaryConfig {
  std::size_t num_sybils = 1;
  int source_class = 1;
  std::vector<int> target_classes{7};
  std::size_t join_round = 0;
  std::optional<std::size_t> leave_round;  // first round the sybils are gone
  AttackStrategy strategy = AttackStrategy::label_flip;
  std::optional<std::size_t> mimicry_victim;  // defaults to the target class's honest client
};

struct ExperimentConfig {
  DataConfig data;
  std::size_t hidden_dim = 0;
  LocalTrainConfig local;
  double server_lr = 0.3;
  std::size_t rounds = 300;
  std::size_t honest_clients = 10;
  std::vector<AdversaryConfig> adversaries;
  AggregatorKind aggregator = FedAvgParams{};
  // For Krum rules: use the number of active sybils as f each round.
  bool krum_auto_f = true;
  std::uint64_t seed = 1;

  // Checks everything that does not depend on loaded data. For IDX sources
  // the class-range checks run once the files are read.
  void validate() const;
  void validate(std::size_t num_classes) const;
};

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

struct HonestRole {
  int data_class = 0;
};

struct SybilRole {
  std::size_t adversary = 0;
  int source_class = 0;
  int target_class = 0;
  AttackStrategy strategy = AttackStrategy::label_flip;
  // Set for the mimicry copycat: the honest client whose update it replays.
  std::optional<ClientId> copies;
};

struct ClientSpec {
  ClientId id = 0;
  std::variant<HonestRole, SybilRole> role;
  std::size_t join_round = 0;
  std::optional<std::size_t> leave_round;

  bool is_sybil() const { return std::holds_alternative<SybilRole>(role); }
  bool is_copycat() const;
  bool active_at(std::size_t round) const {
    return join_round <= round && (!leave_round || round < *leave_round);
  }
};

// ---------------------------------------------------------------------------
// Per-round output
// ---------------------------------------------------------------------------

struct AttackTarget {
  std::size_t adversary = 0;
  int source_class = 0;
  int target_class = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> attack_rates;  // aligned with Simulation::attack_targets()
  std::optional<double> estimated_poisoning_rate;
  double true_poisoning_rate = 0.0;
  std::optional<double> threshold;
  std::vector<ClientId> active_clients;
  std::optional<GroupPartition> partition;
  std::optional<std::vector<double>> foolsgold_weights;
  std::optional<KrumDiagnostics> krum;
  double wall_seconds = 0.0;
};

struct ExperimentSummary {
  std::size_t rounds = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double final_train_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  std::vector<AttackReport> attacks;
  double final_true_poisoning_rate = 0.0;
  std::optional<double> final_estimated_poisoning_rate;
};

struct ExperimentResult {
  ModelState final_model;
  std::vector<RoundRecord> rounds;
  ExperimentSummary summary;
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

class Simulation {
 public:
  // Builds the datasets described by cfg.data.
  explicit Simulation(const ExperimentConfig& cfg);
  // Uses caller-provided datasets; cfg.data is ignored apart from
  // duplicate_poison_data.
  Simulation(const ExperimentConfig& cfg, Dataset train, Dataset test);

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;
  Simulation(Simulation&&) noexcept = default;
  Simulation& operator=(Simulation&&) noexcept = default;

  // Advances one round: local training, history update, aggregation, model
  // update, evaluation.
  RoundRecord run_round();

  // Metrics of the current model without training.
  RoundRecord snapshot() const;

  // Worker threads for local training. Results do not depend on this.
  void set_jobs(std::size_t jobs) { jobs_ = jobs == 0 ? 1 : jobs; }

  std::size_t round() const noexcept { return round_; }
  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ModelState& model() const noexcept { return model_; }
  const Dataset& train_set() const noexcept { return train_; }
  const Dataset& test_set() const noexcept { return test_; }
  const std::vector<ClientSpec>& clients() const noexcept { return clients_; }
  const std::vector<AttackTarget>& attack_targets() const noexcept { return targets_; }
  const std::vector<ClientUpdate>& last_updates() const noexcept { return last_updates_; }
  const std::optional<AggregationOutcome>& last_outcome() const noexcept { return last_outcome_; }
  // Accumulated update of a client; empty until the client first submits.
  const std::optional<ParamVector>& history(ClientId id) const { return histories_.at(id); }

 private:
  Simulation(const ExperimentConfig& cfg, std::pair<Dataset, Dataset> data);
  void build_clients();
  RoundRecord measure(std::size_t round) const;

  ExperimentConfig cfg_;
  Dataset train_;
  Dataset test_;
  std::vector<Example> train_examples_;
  std::vector<Example> test_examples_;
  std::vector<ClientSpec> clients_;
  std::vector<std::vector<Example>> views_;  // per client training view
  std::vector<AttackTarget> targets_;
  std::vector<std::optional<ParamVector>> histories_;
  ModelState model_;
  std::size_t round_ = 0;
  std::size_t jobs_ = 1;
  std::vector<ClientUpdate> last_updates_;
  std::optional<AggregationOutcome> last_outcome_;
};

using RoundObserver = std::function<void(const RoundRecord&)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer = {},
                                std::size_t jobs = 1);

}  // namespace sybilsim
