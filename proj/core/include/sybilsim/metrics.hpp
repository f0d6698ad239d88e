#pragma once

#include <cstddef>
#include <vector>

#include "sybilsim/aggregation.hpp"
#include "sybilsim/data.hpp"
#include "sybilsim/model.hpp"

namespace sybilsim {

struct AttackReport {
  std::size_t adversary = 0;
  int source_class = 0;
  int target_class = 0;
  double attack_rate = 0.0;
  std::vector<double> series;  // one value per round, round 1 first

  double protection_rate() const { return 1.0 - attack_rate; }
};

// Fraction of source-class test examples the model predicts as target_class.
double attack_success_rate(const ModelState& model, const Dataset& test, int source_class,
                           int target_class);

// Same quantity read off an evaluation's confusion matrix.
double attack_success_rate(const Evaluation& evaluation, int source_class, int target_class);

// Share of submitting clients that SaFL placed in a group of size >= 2.
double estimated_poisoning_rate(const GroupPartition& partition);

// Active sybils over active clients; 0 when nobody is active.
double true_poisoning_rate(std::size_t active_sybils, std::size_t active_clients);

}  // namespace sybilsim
