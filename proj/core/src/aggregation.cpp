#include "sybilsim/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "sybilsim/errors.hpp"

namespace sybilsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_nonempty(std::span<const ClientUpdate> updates, const char* rule) {
  if (updates.empty()) throw PreconditionError(std::string(rule) + ": no updates submitted");
}

void require_aligned(std::span<const ClientUpdate> updates, std::span<const ParamVector> histories,
                     const char* rule) {
  if (updates.size() != histories.size()) {
    throw PreconditionError(std::string(rule) + ": " + std::to_string(updates.size()) +
                            " updates but " + std::to_string(histories.size()) + " histories");
  }
}

std::vector<ClientId> ids_of(std::span<const ClientUpdate> updates) {
  std::vector<ClientId> ids;
  ids.reserve(updates.size());
  for (const auto& u : updates) ids.push_back(u.client);
  return ids;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // The smaller root wins so that component labels are order-stable.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

void validate(const ThresholdSchedule& schedule) {
  std::visit(overloaded{
                 [](const FixedThreshold& s) {
                   if (!(s.nu > 0.0 && s.nu < 2.0)) {
                     throw ConfigError("threshold: fixed nu must lie in (0, 2)");
                   }
                 },
                 [](const DecayThreshold& s) {
                   if (!(s.initial > 0.0 && s.initial < 2.0)) {
                     throw ConfigError("threshold: decay initial value must lie in (0, 2)");
                   }
                   if (!(s.rate > 0.0 && s.rate < 1.0)) {
                     throw ConfigError("threshold: decay rate must lie in (0, 1)");
                   }
                 },
             },
             schedule);
}

double threshold_at(const ThresholdSchedule& schedule, std::size_t t) {
  return std::visit(overloaded{
                        [](const FixedThreshold& s) { return s.nu; },
                        [t](const DecayThreshold& s) {
                          return s.initial * std::pow(1.0 - s.rate, static_cast<double>(t));
                        },
                    },
                    schedule);
}

std::string aggregator_name(const AggregatorKind& kind) {
  return std::visit(overloaded{
                        [](const FedAvgParams&) -> std::string { return "fedavg"; },
                        [](const KrumParams& p) -> std::string {
                          return p.multi ? "multikrum" : "krum";
                        },
                        [](const FoolsGoldParams&) -> std::string { return "foolsgold"; },
                        [](const SaflParams&) -> std::string { return "safl"; },
                    },
                    kind);
}

void validate(const AggregatorKind& kind) {
  std::visit(overloaded{
                 [](const FedAvgParams&) {},
                 [](const KrumParams& p) {
                   if (p.m && *p.m == 0) throw ConfigError("multikrum: m must be >= 1");
                 },
                 [](const FoolsGoldParams& p) {
                   if (!(p.confidence > 0.0) || !std::isfinite(p.confidence)) {
                     throw ConfigError("foolsgold: confidence must be positive");
                   }
                 },
                 [](const SaflParams& p) { validate(p.schedule); },
             },
             kind);
}

std::size_t GroupPartition::grouped_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

bool GroupPartition::is_partition_of(std::span<const ClientId> clients) const {
  std::multiset<ClientId> seen;
  for (const auto& g : groups) {
    if (g.size() < 2) return false;
    seen.insert(g.begin(), g.end());
  }
  seen.insert(singletons.begin(), singletons.end());
  const std::multiset<ClientId> expected(clients.begin(), clients.end());
  if (seen != expected) return false;
  return std::adjacent_find(seen.begin(), seen.end()) == seen.end();
}

GroupPartition safl_group(std::span<const ClientId> clients, std::span<const ParamVector> basis,
                          double nu, Grouping grouping) {
  if (clients.empty()) throw PreconditionError("safl_group: no clients");
  if (clients.size() != basis.size()) {
    throw PreconditionError("safl_group: client list and basis vectors differ in length");
  }
  const std::size_t n = clients.size();
  for (const auto& v : basis) {
    if (v.size() != basis.front().size()) throw DimensionError("safl_group: length mismatch");
  }

  // Positions sorted by client id; pair scans run in this order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return clients[a] < clients[b]; });

  GroupPartition out;
  out.threshold_used = nu;

  if (grouping == Grouping::components) {
    DisjointSets sets(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (cosine_distance(basis[order[a]], basis[order[b]]) < nu) sets.unite(a, b);
      }
    }
    std::vector<std::vector<ClientId>> members(n);
    for (std::size_t a = 0; a < n; ++a) members[sets.find(a)].push_back(clients[order[a]]);
    for (auto& m : members) {
      if (m.size() >= 2) {
        out.groups.push_back(std::move(m));
      } else if (m.size() == 1) {
        out.singletons.push_back(m.front());
      }
    }
  } else {
    std::vector<bool> grouped(n, false);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (grouped[a] || grouped[b]) continue;
        if (cosine_distance(basis[order[a]], basis[order[b]]) < nu) {
          grouped[a] = grouped[b] = true;
          out.groups.push_back({clients[order[a]], clients[order[b]]});
        }
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      if (!grouped[a]) out.singletons.push_back(clients[order[a]]);
    }
  }
  std::sort(out.singletons.begin(), out.singletons.end());
  return out;
}

AggregationOutcome safl_aggregate(std::span<const ClientUpdate> updates,
                                  std::span<const ParamVector> histories, std::size_t t,
                                  const SaflParams& params) {
  require_nonempty(updates, "safl");
  require_aligned(updates, histories, "safl");

  const std::vector<ClientId> ids = ids_of(updates);
  std::vector<ParamVector> current;
  current.reserve(updates.size());
  for (const auto& u : updates) current.push_back(u.delta);

  const std::span<const ParamVector> distance_vectors =
      params.distance_basis == DistanceBasis::accumulated ? histories
                                                          : std::span<const ParamVector>(current);
  const std::span<const ParamVector> selection_vectors =
      params.selection_basis == SelectionBasis::accumulated ? histories
                                                            : std::span<const ParamVector>(current);

  const double nu = threshold_at(params.schedule, t);
  AggregationOutcome out;
  out.clients = ids;
  out.partition = safl_group(ids, distance_vectors, nu, params.grouping);

  auto position_of = [&](ClientId id) {
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
  };

  // Ungrouped updates enter gamma as-is, in submission order.
  const auto& singletons = out.partition->singletons;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (std::binary_search(singletons.begin(), singletons.end(), ids[k])) {
      out.gamma.push_back(selection_vectors[k]);
    }
  }
  // One median per group.
  for (const auto& group : out.partition->groups) {
    std::vector<ParamVector> members;
    members.reserve(group.size());
    for (ClientId id : group) members.push_back(selection_vectors[position_of(id)]);
    out.gamma.push_back(elementwise_median(members));
  }
  return out;
}

AggregationOutcome fedavg(std::span<const ClientUpdate> updates) {
  require_nonempty(updates, "fedavg");
  AggregationOutcome out;
  out.clients = ids_of(updates);
  for (const auto& u : updates) out.gamma.push_back(u.delta);
  return out;
}

std::vector<double> krum_scores(std::span<const ParamVector> vectors, std::size_t f) {
  const std::size_t n = vectors.size();
  if (n < f + 3) {
    throw ConfigError("krum: need N >= f + 3 so that N - f - 2 >= 1 (N = " + std::to_string(n) +
                      ", f = " + std::to_string(f) + ")");
  }
  const std::size_t neighbours = n - f - 2;

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = squared_euclidean(vectors[i], vectors[j]);
    }
  }

  std::vector<double> scores(n, 0.0);
  std::vector<std::size_t> peers;
  for (std::size_t i = 0; i < n; ++i) {
    peers.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) peers.push_back(j);
    }
    std::partial_sort(peers.begin(), peers.begin() + static_cast<std::ptrdiff_t>(neighbours),
                      peers.end(), [&](std::size_t a, std::size_t b) {
                        const double da = dist[i * n + a];
                        const double db = dist[i * n + b];
                        return da < db || (da == db && a < b);
                      });
    // Summed in ascending-distance order.
    double score = 0.0;
    for (std::size_t k = 0; k < neighbours; ++k) score += dist[i * n + peers[k]];
    scores[i] = score;
  }
  return scores;
}

AggregationOutcome krum_select(std::span<const ClientUpdate> updates, const KrumParams& params) {
  require_nonempty(updates, "krum");
  std::vector<ParamVector> vectors;
  vectors.reserve(updates.size());
  for (const auto& u : updates) vectors.push_back(u.delta);

  const std::size_t n = updates.size();
  KrumDiagnostics diag;
  diag.scores = krum_scores(vectors, params.f);

  std::size_t keep = 1;
  if (params.multi) keep = std::min(n, params.m.value_or(n - params.f - 2));

  std::vector<std::size_t> ranked(n);
  std::iota(ranked.begin(), ranked.end(), std::size_t{0});
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    const double sa = diag.scores[a];
    const double sb = diag.scores[b];
    return sa < sb || (sa == sb && updates[a].client < updates[b].client);
  });
  ranked.resize(keep);
  std::sort(ranked.begin(), ranked.end(),
            [&](std::size_t a, std::size_t b) { return updates[a].client < updates[b].client; });

  AggregationOutcome out;
  out.clients = ids_of(updates);
  for (std::size_t k : ranked) {
    diag.selected.push_back(updates[k].client);
    out.gamma.push_back(updates[k].delta);
  }
  out.krum = std::move(diag);
  return out;
}

std::vector<double> foolsgold_weights(std::span<const ParamVector> histories, double confidence) {
  const std::size_t n = histories.size();
  if (n < 2) throw ConfigError("foolsgold: needs at least 2 clients");
  if (!(confidence > 0.0)) throw ConfigError("foolsgold: confidence must be positive");

  // Pairwise cosine similarity with the self-similarity zeroed, so every
  // row maximum is at least 0.
  std::vector<double> cs(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      cs[i * n + j] = cs[j * n + i] = 1.0 - cosine_distance(histories[i], histories[j]);
    }
  }
  std::vector<double> max_cs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) max_cs[i] = std::max(max_cs[i], cs[i * n + j]);
  }

  // Pardoning.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && max_cs[i] < max_cs[j]) cs[i * n + j] *= max_cs[i] / max_cs[j];
    }
  }

  std::vector<double> alpha(n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_max = std::max(row_max, cs[i * n + j]);
    alpha[i] = std::clamp(1.0 - row_max, 0.0, 1.0);
  }
  const double top = *std::max_element(alpha.begin(), alpha.end());
  if (top <= 0.0) return std::vector<double>(n, 0.0);

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = alpha[i] / top;
    if (a >= 1.0) {
      weights[i] = 1.0;
    } else if (a <= 0.0) {
      weights[i] = 0.0;
    } else {
      weights[i] = std::clamp(confidence * (std::log(a / (1.0 - a)) + 0.5), 0.0, 1.0);
    }
  }
  return weights;
}

AggregationOutcome foolsgold(std::span<const ClientUpdate> updates,
                             std::span<const ParamVector> histories,
                             const FoolsGoldParams& params) {
  require_nonempty(updates, "foolsgold");
  require_aligned(updates, histories, "foolsgold");
  AggregationOutcome out;
  out.clients = ids_of(updates);
  out.weights = foolsgold_weights(histories, params.confidence);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    ParamVector scaled = updates[k].delta;
    for (double& v : scaled) v *= (*out.weights)[k];
    out.gamma.push_back(std::move(scaled));
  }
  return out;
}

AggregationOutcome aggregate(const AggregatorKind& kind, std::span<const ClientUpdate> updates,
                             std::span<const ParamVector> histories, std::size_t t) {
  return std::visit(overloaded{
                        [&](const FedAvgParams&) { return fedavg(updates); },
                        [&](const KrumParams& p) { return krum_select(updates, p); },
                        [&](const FoolsGoldParams& p) { return foolsgold(updates, histories, p); },
                        [&](const SaflParams& p) {
                          return safl_aggregate(updates, histories, t, p);
                        },
                    },
                    kind);
}

ModelState update_model(const ModelState& previous, std::span<const ParamVector> gamma,
                        double server_lr) {
  if (gamma.empty()) throw PreconditionError("update_model: empty gamma");
  const std::size_t d = previous.params.size();
  ParamVector sum(d, 0.0);
  for (const auto& g : gamma) {
    if (g.size() != d) throw DimensionError("update_model: gamma vector length mismatch");
    accumulate_into(sum, g);
  }
  const auto count = static_cast<double>(gamma.size());
  ModelState next = previous;
  for (std::size_t i = 0; i < d; ++i) next.params[i] += server_lr * (sum[i] / count);
  return next;
}

}  // namespace sybilsim
