#include "sybilsim/metrics.hpp"

#include <string>

#include "sybilsim/errors.hpp"

namespace sybilsim {

double attack_success_rate(const ModelState& model, const Dataset& test, int source_class,
                           int target_class) {
  std::vector<Example> source;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == source_class) source.push_back({test.row(i), test.labels[i]});
  }
  if (source.empty()) {
    throw ConfigError("attack rate: test set has no examples of source class " +
                      std::to_string(source_class));
  }
  const Evaluation ev = evaluate(model, source);
  std::size_t hits = 0;
  for (int p : ev.predictions) hits += p == target_class ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(source.size());
}

double attack_success_rate(const Evaluation& evaluation, int source_class, int target_class) {
  const std::size_t k = evaluation.num_classes;
  if (source_class < 0 || target_class < 0 || static_cast<std::size_t>(source_class) >= k ||
      static_cast<std::size_t>(target_class) >= k) {
    throw ConfigError("attack rate: class index out of range");
  }
  std::size_t row_total = 0;
  for (std::size_t p = 0; p < k; ++p) {
    row_total += evaluation.confusion_at(static_cast<std::size_t>(source_class), p);
  }
  if (row_total == 0) {
    throw ConfigError("attack rate: test set has no examples of source class " +
                      std::to_string(source_class));
  }
  const std::size_t hits = evaluation.confusion_at(static_cast<std::size_t>(source_class),
                                                   static_cast<std::size_t>(target_class));
  return static_cast<double>(hits) / static_cast<double>(row_total);
}

double estimated_poisoning_rate(const GroupPartition& partition) {
  const std::size_t grouped = partition.grouped_count();
  const std::size_t total = grouped + partition.singletons.size();
  if (total == 0) return 0.0;
  return static_cast<double>(grouped) / static_cast<double>(total);
}

double true_poisoning_rate(std::size_t active_sybils, std::size_t active_clients) {
  if (active_clients == 0) return 0.0;
  return static_cast<double>(active_sybils) / static_cast<double>(active_clients);
}

}  // namespace sybilsim
