#include "sybilsim/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <string>
#include <thread>

#include "sybilsim/errors.hpp"
#include "sybilsim/seeding.hpp"

namespace sybilsim {

namespace {

std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg) {
  cfg.validate();
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&cfg.data.source)) {
    SyntheticSpec spec;
    spec.num_classes = syn->num_classes;
    spec.input_dim = syn->input_dim;
    spec.per_class = syn->per_class;
    spec.spread = syn->spread;
    spec.seed = derive_seed(cfg.seed, "data");
    return generate_synthetic(spec);
  }
  const auto& idx = std::get<IdxDataConfig>(cfg.data.source);
  Dataset train = load_idx(idx.train_images, idx.train_labels, idx.limit_per_class);
  Dataset test = load_idx(idx.test_images, idx.test_labels, idx.test_limit_per_class);
  if (train.input_dim != test.input_dim) {
    throw FormatError("idx data: train and test images differ in size");
  }
  const std::size_t k = std::max(train.num_classes, test.num_classes);
  train.num_classes = test.num_classes = k;
  return {std::move(train), std::move(test)};
}

}  // namespace

bool ClientSpec::is_copycat() const {
  const auto* sybil = std::get_if<SybilRole>(&role);
  return sybil != nullptr && sybil->copies.has_value();
}

void ExperimentConfig::validate() const {
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&data.source)) {
    validate(syn->num_classes);
    return;
  }
  const auto& idx = std::get<IdxDataConfig>(data.source);
  if (idx.limit_per_class == 0 || idx.test_limit_per_class == 0) {
    throw ConfigError("data: idx limits must be positive");
  }
  validate(0);
}

// num_classes == 0 skips the checks that need the class count.
void ExperimentConfig::validate(std::size_t num_classes) const {
  local.validate();
  sybilsim::validate(aggregator);
  if (!(server_lr > 0.0) || !std::isfinite(server_lr)) {
    throw ConfigError("server_lr must be positive");
  }
  if (honest_clients == 0) throw ConfigError("honest_clients must be positive");
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&data.source)) {
    if (syn->num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
    if (syn->per_class < 2) throw ConfigError("data.per_class must be >= 2");
    if (syn->input_dim == 0) throw ConfigError("data.input_dim must be positive");
    if (!(syn->spread >= 0.0) || !std::isfinite(syn->spread)) {
      throw ConfigError("data.spread must be nonnegative");
    }
  }
  if (num_classes != 0 && honest_clients != num_classes) {
    throw ConfigError("honest_clients (" + std::to_string(honest_clients) +
                      ") must equal num_classes (" + std::to_string(num_classes) +
                      "): one honest client per class");
  }

  for (std::size_t a = 0; a < adversaries.size(); ++a) {
    const auto& adv = adversaries[a];
    const std::string where = "adversaries[" + std::to_string(a) + "]: ";
    if (adv.num_sybils == 0) throw ConfigError(where + "num_sybils must be >= 1");
    if (adv.target_classes.empty()) throw ConfigError(where + "at least one target class");
    auto in_range = [&](int c) {
      return c >= 0 && (num_classes == 0 || static_cast<std::size_t>(c) < num_classes);
    };
    if (!in_range(adv.source_class)) throw ConfigError(where + "source_class out of range");
    for (int t : adv.target_classes) {
      if (!in_range(t)) throw ConfigError(where + "target class out of range");
      if (t == adv.source_class) {
        throw ConfigError(where + "source_class must differ from target_class");
      }
    }
    if (adv.target_classes.size() > 1) {
      if (adv.target_classes.size() != adv.num_sybils) {
        throw ConfigError(where + "multi-target needs one target per sybil (" +
                          std::to_string(adv.num_sybils) + " sybils, " +
                          std::to_string(adv.target_classes.size()) + " targets)");
      }
      const std::set<int> distinct(adv.target_classes.begin(), adv.target_classes.end());
      if (distinct.size() != adv.target_classes.size()) {
        throw ConfigError(where + "multi-target classes must be distinct");
      }
    }
    if (adv.leave_round && *adv.leave_round <= adv.join_round) {
      throw ConfigError(where + "leave_round must be after join_round");
    }
    if (adv.strategy == AttackStrategy::mimicry) {
      if (adv.num_sybils < 2) {
        throw ConfigError(where + "mimicry needs >= 2 sybils (one copycat, one poison carrier)");
      }
      if (adv.target_classes.size() != 1) {
        throw ConfigError(where + "mimicry supports a single target class");
      }
      if (adv.mimicry_victim && *adv.mimicry_victim >= honest_clients) {
        throw ConfigError(where + "mimicry victim must be an honest client id");
      }
    }
  }
}

Simulation::Simulation(const ExperimentConfig& cfg) : Simulation(cfg, build_datasets(cfg)) {}

Simulation::Simulation(const ExperimentConfig& cfg, Dataset train, Dataset test)
    : Simulation(cfg, std::make_pair(std::move(train), std::move(test))) {}

Simulation::Simulation(const ExperimentConfig& cfg, std::pair<Dataset, Dataset> data)
    : cfg_(cfg), train_(std::move(data.first)), test_(std::move(data.second)) {
  if (train_.size() == 0 || test_.size() == 0) throw ConfigError("empty train or test set");
  if (train_.input_dim != test_.input_dim || train_.num_classes != test_.num_classes) {
    throw ConfigError("train and test sets disagree on shape");
  }
  cfg_.validate(train_.num_classes);
  for (std::size_t c = 0; c < train_.num_classes; ++c) {
    if (train_.count_of(static_cast<int>(c)) == 0) {
      throw ConfigError("training split has no examples of class " + std::to_string(c));
    }
  }

  train_examples_ = examples_of(train_);
  test_examples_ = examples_of(test_);

  const ModelArch arch{train_.input_dim, train_.num_classes, cfg_.hidden_dim};
  model_ = init_model(arch, derive_seed(cfg_.seed, "init"));
  build_clients();
}

void Simulation::build_clients() {
  const auto honest = partition_non_iid(train_, cfg_.honest_clients);
  for (const auto& shard : honest) {
    clients_.push_back({shard.owner, HonestRole{static_cast<int>(shard.owner)}, 0, std::nullopt});
    views_.push_back(shard.training_view(train_));
  }

  for (std::size_t a = 0; a < cfg_.adversaries.size(); ++a) {
    const auto& adv = cfg_.adversaries[a];
    const bool mimicry = adv.strategy == AttackStrategy::mimicry;
    const ClientId first = clients_.size();

    if (mimicry) {
      const int target = adv.target_classes.front();
      const ClientId victim = adv.mimicry_victim.value_or(static_cast<ClientId>(target));
      SybilRole role{a, adv.source_class, target, adv.strategy, victim};
      clients_.push_back({first, role, adv.join_round, adv.leave_round});
      views_.emplace_back();
    }

    const std::size_t carriers = mimicry ? adv.num_sybils - 1 : adv.num_sybils;
    SybilShardSpec spec;
    spec.source_class = adv.source_class;
    spec.target_class = adv.target_classes.front();
    spec.num_sybils = carriers;
    spec.seed = derive_seed(cfg_.seed, "sybil-split", a);
    spec.duplicate_poison_data = cfg_.data.duplicate_poison_data;
    spec.first_owner = clients_.size();
    auto shards = build_sybil_shards(train_, spec);
    for (std::size_t s = 0; s < shards.size(); ++s) {
      const int target =
          adv.target_classes.size() > 1 ? adv.target_classes[s] : adv.target_classes.front();
      shards[s].label_override = target;
      SybilRole role{a, adv.source_class, target, adv.strategy, std::nullopt};
      clients_.push_back({shards[s].owner, role, adv.join_round, adv.leave_round});
      views_.push_back(shards[s].training_view(train_));
    }

    for (int target : adv.target_classes) targets_.push_back({a, adv.source_class, target});
  }
  histories_.assign(clients_.size(), std::nullopt);
}

RoundRecord Simulation::run_round() {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t t = round_ + 1;

  std::vector<std::size_t> active;
  for (const auto& c : clients_) {
    if (c.active_at(t)) active.push_back(c.id);
  }

  std::vector<ClientUpdate> updates(active.size());
  auto train_slot = [&](std::size_t k) {
    const ClientSpec& c = clients_[active[k]];
    updates[k].client = c.id;
    updates[k].round = t;
    if (c.is_copycat()) return;
    updates[k].delta =
        local_train(model_, views_[c.id], cfg_.local, derive_seed(cfg_.seed, "train", c.id, t));
  };
  if (jobs_ <= 1 || active.size() <= 1) {
    for (std::size_t k = 0; k < active.size(); ++k) train_slot(k);
  } else {
    std::vector<std::thread> workers;
    const std::size_t n_workers = std::min(jobs_, active.size());
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t k = w; k < active.size(); k += n_workers) train_slot(k);
      });
    }
    for (auto& worker : workers) worker.join();
  }

  // Copycats replay their victim's update byte for byte.
  for (std::size_t k = 0; k < active.size(); ++k) {
    const ClientSpec& c = clients_[active[k]];
    if (!c.is_copycat()) continue;
    const ClientId victim = *std::get<SybilRole>(c.role).copies;
    const auto it = std::find(active.begin(), active.end(), victim);
    updates[k].delta = it != active.end() ? updates[static_cast<std::size_t>(it - active.begin())].delta
                                          : ParamVector(model_.params.size(), 0.0);
  }

  std::vector<ParamVector> aligned_histories;
  aligned_histories.reserve(active.size());
  for (const auto& u : updates) {
    auto& h = histories_[u.client];
    if (!h) h = ParamVector(u.delta.size(), 0.0);
    accumulate_into(*h, u.delta);
    aligned_histories.push_back(*h);
  }

  AggregatorKind kind = cfg_.aggregator;
  if (auto* krum = std::get_if<KrumParams>(&kind); krum != nullptr && cfg_.krum_auto_f) {
    krum->f = static_cast<std::size_t>(std::count_if(
        active.begin(), active.end(), [&](ClientId id) { return clients_[id].is_sybil(); }));
  }

  const std::string context = "round " + std::to_string(t) + ": ";
  try {
    if (updates.empty()) throw PreconditionError("no active clients");
    AggregationOutcome outcome = aggregate(kind, updates, aligned_histories, t);
    model_ = update_model(model_, outcome.gamma, cfg_.server_lr);
    last_outcome_ = std::move(outcome);
  } catch (const ConfigError& e) {
    throw ConfigError(context + e.what());
  } catch (const Error& e) {
    throw Error(context + e.what());
  }
  if (!model_.params.all_finite()) throw Error(context + "model parameters became non-finite");

  last_updates_ = std::move(updates);
  round_ = t;

  RoundRecord record = measure(t);
  record.active_clients = active;
  std::size_t active_sybils = 0;
  for (ClientId id : active) active_sybils += clients_[id].is_sybil() ? 1 : 0;
  record.true_poisoning_rate = true_poisoning_rate(active_sybils, active.size());
  if (const auto* safl = std::get_if<SaflParams>(&cfg_.aggregator)) {
    record.threshold = threshold_at(safl->schedule, t);
  }
  if (last_outcome_->partition) {
    record.partition = last_outcome_->partition;
    record.estimated_poisoning_rate = estimated_poisoning_rate(*last_outcome_->partition);
  }
  record.foolsgold_weights = last_outcome_->weights;
  record.krum = last_outcome_->krum;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

RoundRecord Simulation::snapshot() const {
  RoundRecord record = measure(round_);
  std::size_t active = 0;
  std::size_t sybils = 0;
  for (const auto& c : clients_) {
    if (!c.active_at(round_)) continue;
    ++active;
    sybils += c.is_sybil() ? 1 : 0;
    record.active_clients.push_back(c.id);
  }
  record.true_poisoning_rate = true_poisoning_rate(sybils, active);
  return record;
}

RoundRecord Simulation::measure(std::size_t round) const {
  RoundRecord record;
  record.round = round;
  const Evaluation train_eval = evaluate(model_, train_examples_);
  const Evaluation test_eval = evaluate(model_, test_examples_);
  record.train_loss = train_eval.loss;
  record.train_accuracy = train_eval.accuracy;
  record.val_loss = test_eval.loss;
  record.val_accuracy = test_eval.accuracy;
  for (const auto& target : targets_) {
    record.attack_rates.push_back(
        attack_success_rate(test_eval, target.source_class, target.target_class));
  }
  return record;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer,
                                std::size_t jobs) {
  Simulation sim(cfg);
  sim.set_jobs(jobs);

  ExperimentResult result;
  result.rounds.reserve(cfg.rounds);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    result.rounds.push_back(sim.run_round());
    if (observer) observer(result.rounds.back());
  }

  const RoundRecord last = result.rounds.empty() ? sim.snapshot() : result.rounds.back();
  auto& s = result.summary;
  s.rounds = cfg.rounds;
  s.final_train_loss = last.train_loss;
  s.final_val_loss = last.val_loss;
  s.final_train_accuracy = last.train_accuracy;
  s.final_val_accuracy = last.val_accuracy;
  s.final_true_poisoning_rate = last.true_poisoning_rate;
  s.final_estimated_poisoning_rate = last.estimated_poisoning_rate;
  const auto& targets = sim.attack_targets();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    AttackReport report;
    report.adversary = targets[k].adversary;
    report.source_class = targets[k].source_class;
    report.target_class = targets[k].target_class;
    report.attack_rate = last.attack_rates[k];
    for (const auto& r : result.rounds) report.series.push_back(r.attack_rates[k]);
    s.attacks.push_back(std::move(report));
  }
  result.final_model = sim.model();
  return result;
}

}  // namespace sybilsim
