#include "sybilsim_cli/config_io.hpp"

#include <fstream>
#include <set>

#include "sybilsim/errors.hpp"

namespace sybilsim::cli {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so the rest
// can be reported as unknown. "$comment" is allowed anywhere and ignored.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
    return v.get<double>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(path(key) + ": expected a nonnegative integer");
    }
    return v.get<std::size_t>();
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (key == "$comment") continue;
      if (!seen_.contains(key)) throw ConfigError(path_ + ": unknown key \"" + key + "\"");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum>
Enum pick(const std::string& value, const std::string& path,
          std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path + ": \"" + value + "\" is not one of " + allowed);
}

ThresholdSchedule threshold_from_json(const json& node, const std::string& path) {
  if (node.is_number()) return FixedThreshold{node.get<double>()};
  if (node.is_string()) {
    if (node.get<std::string>() == "decay") return DecayThreshold{};
    throw ConfigError(path + ": expected a number, \"decay\", or an object");
  }
  ObjectReader r(node, path);
  const std::string kind = r.string("kind", "fixed");
  ThresholdSchedule out;
  if (kind == "fixed") {
    if (!r.has("nu")) throw ConfigError(r.path("nu") + ": required for a fixed threshold");
    out = FixedThreshold{r.number("nu", 0.0)};
  } else if (kind == "decay") {
    DecayThreshold d;
    d.initial = r.number("initial", d.initial);
    d.rate = r.number("rate", d.rate);
    out = d;
  } else {
    throw ConfigError(r.path("kind") + ": expected \"fixed\" or \"decay\"");
  }
  r.finish();
  return out;
}

struct ParsedAggregator {
  AggregatorKind kind;
  bool krum_auto_f = true;
};

ParsedAggregator aggregator_from_json(const json& node, const std::string& path) {
  ParsedAggregator out;
  std::string kind;
  std::optional<ObjectReader> r;
  if (node.is_string()) {
    kind = node.get<std::string>();
  } else {
    r.emplace(node, path);
    if (!r->has("kind")) throw ConfigError(r->path("kind") + ": required");
    kind = r->string("kind", "");
  }

  if (kind == "fedavg") {
    out.kind = FedAvgParams{};
  } else if (kind == "krum" || kind == "multikrum") {
    KrumParams p;
    p.multi = kind == "multikrum";
    if (r && r->has("f")) {
      const json& f = r->at("f");
      if (f.is_string() && f.get<std::string>() == "auto") {
        out.krum_auto_f = true;
      } else if (f.is_number_integer() && f.get<long long>() >= 0) {
        p.f = f.get<std::size_t>();
        out.krum_auto_f = false;
      } else {
        throw ConfigError(r->path("f") + ": expected \"auto\" or a nonnegative integer");
      }
    }
    if (r && r->has("m")) {
      if (!p.multi) throw ConfigError(r->path("m") + ": only valid for multikrum");
      p.m = r->count("m", 0);
    }
    out.kind = p;
  } else if (kind == "foolsgold") {
    FoolsGoldParams p;
    if (r) p.confidence = r->number("confidence", p.confidence);
    out.kind = p;
  } else if (kind == "safl") {
    SaflParams p;
    if (r) {
      if (r->has("threshold")) p.schedule = threshold_from_json(r->at("threshold"), r->path("threshold"));
      p.distance_basis = pick<DistanceBasis>(
          r->string("distance_basis", "accumulated"), r->path("distance_basis"),
          {{"accumulated", DistanceBasis::accumulated}, {"current", DistanceBasis::current}});
      p.grouping = pick<Grouping>(r->string("grouping", "components"), r->path("grouping"),
                                  {{"components", Grouping::components},
                                   {"literal", Grouping::literal}});
      p.selection_basis = pick<SelectionBasis>(
          r->string("selection_basis", "current"), r->path("selection_basis"),
          {{"current", SelectionBasis::current}, {"accumulated", SelectionBasis::accumulated}});
    }
    out.kind = p;
  } else {
    throw ConfigError(path + ": unknown aggregator \"" + kind +
                      "\" (fedavg, krum, multikrum, foolsgold, safl)");
  }
  if (r) r->finish();
  return out;
}

AdversaryConfig adversary_from_json(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  AdversaryConfig a;
  a.num_sybils = r.count("num_sybils", a.num_sybils);
  a.source_class = r.integer("source_class", a.source_class);
  const bool single = r.has("target_class");
  const bool multi = r.has("target_classes");
  if (single && multi) {
    throw ConfigError(path + ": give either target_class or target_classes, not both");
  }
  if (single) {
    a.target_classes = {r.integer("target_class", 0)};
  } else if (multi) {
    const json& list = r.at("target_classes");
    if (!list.is_array() || list.empty()) {
      throw ConfigError(r.path("target_classes") + ": expected a nonempty array of integers");
    }
    a.target_classes.clear();
    for (const auto& t : list) {
      if (!t.is_number_integer()) {
        throw ConfigError(r.path("target_classes") + ": expected integers");
      }
      a.target_classes.push_back(t.get<int>());
    }
  }
  a.join_round = r.count("join_round", a.join_round);
  if (r.has("leave_round")) a.leave_round = r.count("leave_round", 0);
  a.strategy = pick<AttackStrategy>(r.string("strategy", "label_flip"), r.path("strategy"),
                                    {{"label_flip", AttackStrategy::label_flip},
                                     {"mimicry", AttackStrategy::mimicry}});
  if (r.has("victim")) a.mimicry_victim = r.count("victim", 0);
  r.finish();
  return a;
}

json threshold_to_json(const ThresholdSchedule& s) {
  if (const auto* fixed = std::get_if<FixedThreshold>(&s)) {
    return {{"kind", "fixed"}, {"nu", fixed->nu}};
  }
  const auto& decay = std::get<DecayThreshold>(s);
  return {{"kind", "decay"}, {"initial", decay.initial}, {"rate", decay.rate}};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ObjectReader r(doc, "config");
  ExperimentConfig cfg;
  cfg.seed = r.has("seed") ? [&] {
    const json& v = r.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("config.seed: expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }()
                           : cfg.seed;
  cfg.rounds = r.count("rounds", cfg.rounds);
  cfg.honest_clients = r.count("honest_clients", cfg.honest_clients);
  cfg.server_lr = r.number("server_lr", cfg.server_lr);

  if (r.has("data")) {
    ObjectReader d(r.at("data"), r.path("data"));
    const std::string source = d.string("source", "synthetic");
    if (source == "synthetic") {
      SyntheticDataConfig s;
      s.num_classes = d.count("num_classes", s.num_classes);
      s.input_dim = d.count("input_dim", s.input_dim);
      s.per_class = d.count("per_class", s.per_class);
      s.spread = d.number("spread", s.spread);
      cfg.data.source = s;
    } else if (source == "idx") {
      IdxDataConfig s;
      for (const char* key : {"train_images", "train_labels", "test_images", "test_labels"}) {
        if (!d.has(key)) throw ConfigError(d.path(key) + ": required for idx data");
      }
      s.train_images = d.string("train_images", "");
      s.train_labels = d.string("train_labels", "");
      s.test_images = d.string("test_images", "");
      s.test_labels = d.string("test_labels", "");
      s.limit_per_class = d.count("limit_per_class", s.limit_per_class);
      s.test_limit_per_class = d.count("test_limit_per_class", s.test_limit_per_class);
      cfg.data.source = s;
    } else {
      throw ConfigError(d.path("source") + ": expected \"synthetic\" or \"idx\"");
    }
    cfg.data.duplicate_poison_data = d.boolean("duplicate_poison_data", false);
    d.finish();
  }

  if (r.has("model")) {
    ObjectReader m(r.at("model"), r.path("model"));
    cfg.hidden_dim = m.count("hidden_dim", cfg.hidden_dim);
    m.finish();
  }

  if (r.has("local_train")) {
    ObjectReader l(r.at("local_train"), r.path("local_train"));
    cfg.local.learning_rate = l.number("learning_rate", cfg.local.learning_rate);
    cfg.local.batch_size = l.count("batch_size", cfg.local.batch_size);
    cfg.local.local_steps = l.count("local_steps", cfg.local.local_steps);
    l.finish();
  }

  if (r.has("aggregator")) {
    auto parsed = aggregator_from_json(r.at("aggregator"), r.path("aggregator"));
    cfg.aggregator = parsed.kind;
    cfg.krum_auto_f = parsed.krum_auto_f;
  }

  if (r.has("adversaries")) {
    const json& list = r.at("adversaries");
    if (!list.is_array()) throw ConfigError("config.adversaries: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.adversaries.push_back(
          adversary_from_json(list[i], "config.adversaries[" + std::to_string(i) + "]"));
    }
  }
  r.finish();

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return config_from_json(doc);
}

json aggregator_to_json(const AggregatorKind& kind, bool krum_auto_f) {
  json out;
  out["kind"] = aggregator_name(kind);
  if (const auto* k = std::get_if<KrumParams>(&kind)) {
    out["f"] = krum_auto_f ? json("auto") : json(k->f);
    if (k->multi) out["m"] = k->m ? json(*k->m) : json(nullptr);
  } else if (const auto* fg = std::get_if<FoolsGoldParams>(&kind)) {
    out["confidence"] = fg->confidence;
  } else if (const auto* s = std::get_if<SaflParams>(&kind)) {
    out["threshold"] = threshold_to_json(s->schedule);
    out["distance_basis"] =
        s->distance_basis == DistanceBasis::accumulated ? "accumulated" : "current";
    out["grouping"] = s->grouping == Grouping::components ? "components" : "literal";
    out["selection_basis"] =
        s->selection_basis == SelectionBasis::current ? "current" : "accumulated";
  }
  return out;
}

json config_to_json(const ExperimentConfig& cfg) {
  json out;
  out["seed"] = cfg.seed;
  out["rounds"] = cfg.rounds;
  out["honest_clients"] = cfg.honest_clients;
  out["server_lr"] = cfg.server_lr;

  json data;
  if (const auto* s = std::get_if<SyntheticDataConfig>(&cfg.data.source)) {
    data = {{"source", "synthetic"},
            {"num_classes", s->num_classes},
            {"input_dim", s->input_dim},
            {"per_class", s->per_class},
            {"spread", s->spread}};
  } else {
    const auto& idx = std::get<IdxDataConfig>(cfg.data.source);
    data = {{"source", "idx"},
            {"train_images", idx.train_images.string()},
            {"train_labels", idx.train_labels.string()},
            {"test_images", idx.test_images.string()},
            {"test_labels", idx.test_labels.string()},
            {"limit_per_class", idx.limit_per_class},
            {"test_limit_per_class", idx.test_limit_per_class}};
  }
  data["duplicate_poison_data"] = cfg.data.duplicate_poison_data;
  out["data"] = data;

  out["model"] = {{"hidden_dim", cfg.hidden_dim}};
  out["local_train"] = {{"learning_rate", cfg.local.learning_rate},
                        {"batch_size", cfg.local.batch_size},
                        {"local_steps", cfg.local.local_steps}};
  out["aggregator"] = aggregator_to_json(cfg.aggregator, cfg.krum_auto_f);

  json advs = json::array();
  for (const auto& a : cfg.adversaries) {
    advs.push_back({{"num_sybils", a.num_sybils},
                    {"source_class", a.source_class},
                    {"target_classes", a.target_classes},
                    {"join_round", a.join_round},
                    {"leave_round", a.leave_round ? json(*a.leave_round) : json(nullptr)},
                    {"strategy", a.strategy == AttackStrategy::label_flip ? "label_flip" : "mimicry"},
                    {"victim", a.mimicry_victim ? json(*a.mimicry_victim) : json(nullptr)}});
  }
  out["adversaries"] = advs;
  return out;
}

AggregatorKind aggregator_from_label(const std::string& label, const AggregatorKind& base) {
  if (label == "fedavg") return FedAvgParams{};
  if (label == "krum") return KrumParams{1, false, std::nullopt};
  if (label == "multikrum") return KrumParams{1, true, std::nullopt};
  if (label == "foolsgold") {
    if (const auto* fg = std::get_if<FoolsGoldParams>(&base)) return *fg;
    return FoolsGoldParams{};
  }
  SaflParams safl;
  if (const auto* s = std::get_if<SaflParams>(&base)) safl = *s;
  if (label == "safl") return safl;
  if (label.rfind("safl:", 0) == 0) {
    const std::string arg = label.substr(5);
    if (arg == "decay") {
      safl.schedule = DecayThreshold{};
      return safl;
    }
    try {
      std::size_t used = 0;
      const double nu = std::stod(arg, &used);
      if (used == arg.size()) {
        safl.schedule = FixedThreshold{nu};
        sybilsim::validate(safl.schedule);
        return safl;
      }
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown aggregator label \"" + label +
                    "\" (fedavg, krum, multikrum, foolsgold, safl, safl:<nu>, safl:decay)");
}

}  // namespace sybilsim::cli
