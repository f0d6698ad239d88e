#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sybilsim/linalg.hpp"
#include "sybilsim/model.hpp"

namespace sybilsim {

using ClientId = std::size_t;

// One client's contribution for one round: the additive delta it proposes.
struct ClientUpdate {
  ClientId client = 0;
  std::size_t round = 0;
  ParamVector delta;
};

// ---------------------------------------------------------------------------
// Threshold schedules
// ---------------------------------------------------------------------------

struct FixedThreshold {
  double nu = 0.6;
};

// initial * (1 - rate)^t
struct DecayThreshold {
  double initial = 0.8;
  double rate = 0.001;
};

using ThresholdSchedule = std::variant<FixedThreshold, DecayThreshold>;

void validate(const ThresholdSchedule& schedule);
double threshold_at(const ThresholdSchedule& schedule, std::size_t t);

// ---------------------------------------------------------------------------
// Aggregator parameters
// ---------------------------------------------------------------------------

enum class DistanceBasis { accumulated, current };
enum class Grouping { components, literal };
enum class SelectionBasis { current, accumulated };

struct FedAvgParams {};

struct KrumParams {
  std::size_t f = 1;
  bool multi = false;
  // Number of vectors Multi-Krum keeps; defaults to N - f - 2.
  std::optional<std::size_t> m;
};

struct FoolsGoldParams {
  double confidence = 1.0;
};

struct SaflParams {
  ThresholdSchedule schedule = DecayThreshold{};
  DistanceBasis distance_basis = DistanceBasis::accumulated;
  Grouping grouping = Grouping::components;
  SelectionBasis selection_basis = SelectionBasis::current;
};

using AggregatorKind = std::variant<FedAvgParams, KrumParams, FoolsGoldParams, SaflParams>;

std::string aggregator_name(const AggregatorKind& kind);
void validate(const AggregatorKind& kind);

// ---------------------------------------------------------------------------
// Outcomes and diagnostics
// ---------------------------------------------------------------------------

// The group list of one round: disjoint groups of size >= 2 plus the
// ungrouped clients, which together cover every submitting client.
struct GroupPartition {
  std::vector<std::vector<ClientId>> groups;
  std::vector<ClientId> singletons;
  double threshold_used = 0.0;

  std::size_t grouped_count() const;
  // Disjoint, each group has >= 2 members, and the union equals `clients`.
  bool is_partition_of(std::span<const ClientId> clients) const;
};

struct KrumDiagnostics {
  std::vector<double> scores;     // aligned with submission order
  std::vector<ClientId> selected; // ascending client id
};

struct AggregationOutcome {
  std::vector<ParamVector> gamma;
  std::vector<ClientId> clients;  // submission order
  std::optional<GroupPartition> partition;        // SaFL
  std::optional<std::vector<double>> weights;     // FoolsGold, aligned with clients
  std::optional<KrumDiagnostics> krum;
};

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

// Groups clients whose basis vectors lie within cosine distance `nu`.
// Components mode returns connected components of the "distance < nu" graph;
// literal mode scans pairs i < j in order and pairs two still-ungrouped
// clients whenever they are close.
GroupPartition safl_group(std::span<const ClientId> clients, std::span<const ParamVector> basis,
                          double nu, Grouping grouping = Grouping::components);

// `histories[k]` is the accumulated update of `updates[k].client`.
AggregationOutcome safl_aggregate(std::span<const ClientUpdate> updates,
                                  std::span<const ParamVector> histories, std::size_t t,
                                  const SaflParams& params);

AggregationOutcome fedavg(std::span<const ClientUpdate> updates);

// Krum score of each vector: sum of squared distances to its N - f - 2
// nearest peers (peer ties by lower index).
std::vector<double> krum_scores(std::span<const ParamVector> vectors, std::size_t f);

// Krum keeps the single lowest-scoring update; Multi-Krum keeps the m lowest.
AggregationOutcome krum_select(std::span<const ClientUpdate> updates, const KrumParams& params);

// FoolsGold per-client learning rates from accumulated histories.
std::vector<double> foolsgold_weights(std::span<const ParamVector> histories, double confidence);

AggregationOutcome foolsgold(std::span<const ClientUpdate> updates,
                             std::span<const ParamVector> histories, const FoolsGoldParams& params);

// Dispatches to the rule named by `kind`. `t` is the 1-based round index.
AggregationOutcome aggregate(const AggregatorKind& kind, std::span<const ClientUpdate> updates,
                             std::span<const ParamVector> histories, std::size_t t);

// w_prev + server_lr * mean(gamma), summing gamma in order.
ModelState update_model(const ModelState& previous, std::span<const ParamVector> gamma,
                        double server_lr);

}  // namespace sybilsim
