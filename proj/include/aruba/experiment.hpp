#pragma once
// Config-driven experiment runner.  A JSON config selects an experiment kind,
// an environment or client population, and the learner settings; execution is
// seeded, optionally fans out over a worker pool, and emits a CSV metric
// stream plus a JSON summary whose totals are reductions of that CSV.

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aruba/engine.hpp"
#include "aruba/environments.hpp"
#include "aruba/federated.hpp"

namespace aruba {

using Json = nlohmann::json;

// Carries every schema problem found in one pass, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string s = "config invalid:";
    for (const auto& e : errors) {
      s += "\n  ";
      s += e;
    }
    return s;
  }
  std::vector<std::string> errors_;
};

enum class ExperimentKind { static_sim, dynamic_drift, geometry, batch, federated };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::static_sim: return "static";
    case ExperimentKind::dynamic_drift: return "dynamic";
    case ExperimentKind::geometry: return "geometry";
    case ExperimentKind::batch: return "batch";
    case ExperimentKind::federated: return "federated";
  }
  return "?";
}

struct FederatedBlock {
  ClientPopulationSpec population;
  FedConfig fed;
  int rounds = 200;
  double meta_fraction = 0.8;
  int refine_steps = 10;
};

struct ExperimentConfig {
  std::string id;
  ExperimentKind kind = ExperimentKind::static_sim;
  std::vector<std::uint64_t> seeds = {1};
  int repetitions = 1;
  std::string output;  // CSV path; the summary lands next to it

  EnvSpec env;         // non-federated kinds
  MetaRunConfig meta;
  int heldout_tasks = 20;   // batch kind: test tasks for the risk estimate
  int risk_samples = 400;   // batch kind: held-out losses per test task

  FederatedBlock federated;  // federated kind
};

namespace detail {

// Walks one JSON object, accumulating errors and tracking consumed keys so
// unknown keys can be rejected with their full path.
class Reader {
 public:
  Reader(const Json* node, std::string path, std::vector<std::string>* errors)
      : node_(node), path_(std::move(path)), errors_(errors) {}

  bool present(const std::string& key) const {
    return node_ != nullptr && node_->contains(key);
  }

  void err(const std::string& key, const std::string& msg) const {
    errors_->push_back(prefix(key) + ": " + msg);
  }

  double number(const std::string& key, double def) {
    const Json* v = fetch(key);
    if (v == nullptr) return def;
    if (!v->is_number()) {
      err(key, "expected a number");
      return def;
    }
    return v->get<double>();
  }

  int integer(const std::string& key, int def) {
    const Json* v = fetch(key);
    if (v == nullptr) return def;
    if (!v->is_number_integer()) {
      err(key, "expected an integer");
      return def;
    }
    return v->get<int>();
  }

  bool flag(const std::string& key, bool def) {
    const Json* v = fetch(key);
    if (v == nullptr) return def;
    if (!v->is_boolean()) {
      err(key, "expected true or false");
      return def;
    }
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& def, bool required = false) {
    const Json* v = fetch(key);
    if (v == nullptr) {
      if (required) err(key, "required key is missing");
      return def;
    }
    if (!v->is_string()) {
      err(key, "expected a string");
      return def;
    }
    return v->get<std::string>();
  }

  // String key constrained to a fixed vocabulary.
  template <typename E>
  E choice(const std::string& key, E def, const std::vector<std::pair<std::string, E>>& allowed,
           bool required = false) {
    const Json* v = fetch(key);
    if (v == nullptr) {
      if (required) err(key, "required key is missing");
      return def;
    }
    if (!v->is_string()) {
      err(key, "expected a string");
      return def;
    }
    std::string s = v->get<std::string>();
    for (const auto& [name, value] : allowed) {
      if (name == s) return value;
    }
    std::string msg = "unknown value \"" + s + "\"; allowed:";
    for (const auto& [name, value] : allowed) msg += " " + name;
    err(key, msg);
    return def;
  }

  std::vector<double> number_list(const std::string& key) {
    std::vector<double> out;
    const Json* v = fetch(key);
    if (v == nullptr) return out;
    if (!v->is_array()) {
      err(key, "expected an array of numbers");
      return out;
    }
    for (const auto& item : *v) {
      if (!item.is_number()) {
        err(key, "expected an array of numbers");
        return {};
      }
      out.push_back(item.get<double>());
    }
    return out;
  }

  std::vector<std::uint64_t> seed_list(const std::string& key) {
    std::vector<std::uint64_t> out;
    const Json* v = fetch(key);
    if (v == nullptr) return out;
    if (!v->is_array()) {
      err(key, "expected an array of non-negative integers");
      return out;
    }
    for (const auto& item : *v) {
      if (!item.is_number_unsigned() && !(item.is_number_integer() && item.get<long long>() >= 0)) {
        err(key, "expected an array of non-negative integers");
        return {};
      }
      out.push_back(item.get<std::uint64_t>());
    }
    return out;
  }

  // Child object; missing children read as all-defaults without extra errors.
  Reader child(const std::string& key, bool required = false) {
    const Json* v = fetch(key);
    if (v == nullptr) {
      if (required) err(key, "required block is missing");
      return Reader(nullptr, prefix(key), errors_);
    }
    if (!v->is_object()) {
      err(key, "expected an object");
      return Reader(nullptr, prefix(key), errors_);
    }
    return Reader(v, prefix(key), errors_);
  }

  std::vector<Reader> children(const std::string& key) {
    std::vector<Reader> out;
    const Json* v = fetch(key);
    if (v == nullptr) return out;
    if (!v->is_array()) {
      err(key, "expected an array of objects");
      return out;
    }
    int i = 0;
    for (const auto& item : *v) {
      if (!item.is_object()) {
        err(key, "expected an array of objects");
        return {};
      }
      out.push_back(Reader(&item, prefix(key) + "[" + std::to_string(i++) + "]", errors_));
    }
    return out;
  }

  // Every key not consumed by the schema is an error.
  void done() {
    if (node_ == nullptr) return;
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (used_.count(it.key()) == 0) err(it.key(), "unknown key");
    }
  }

 private:
  std::string prefix(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json* fetch(const std::string& key) {
    if (node_ == nullptr) return nullptr;
    auto it = node_->find(key);
    if (it == node_->end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  const Json* node_ = nullptr;
  std::string path_;
  std::vector<std::string>* errors_ = nullptr;
  std::set<std::string> used_;
};

inline Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

inline Domain parse_domain(Reader r, int d) {
  enum class Shape { ball, box, simplex, unconstrained };
  Shape shape = r.choice<Shape>("shape", Shape::ball,
                                {{"ball", Shape::ball},
                                 {"box", Shape::box},
                                 {"simplex", Shape::simplex},
                                 {"unconstrained", Shape::unconstrained}});
  double radius = r.number("radius", 1.0);
  double half_width = r.number("half_width", 1.0);
  double diameter = r.number("diameter", -1.0);
  if (shape == Shape::ball && radius <= 0.0) r.err("radius", "must be > 0");
  if (shape == Shape::box && half_width <= 0.0) r.err("half_width", "must be > 0");
  if (shape == Shape::unconstrained && diameter <= 0.0) {
    r.err("diameter", "unconstrained domains need a positive diameter bound");
  }
  r.done();
  std::optional<double> diam;
  if (diameter > 0.0) diam = diameter;
  switch (shape) {
    case Shape::ball: return Domain::ball(Vec::Zero(d), radius > 0 ? radius : 1.0, diam);
    case Shape::box:
      return Domain::box(Vec::Constant(d, -std::abs(half_width)),
                         Vec::Constant(d, std::abs(half_width)), diam);
    case Shape::simplex: return Domain::simplex(d, diam);
    case Shape::unconstrained: return Domain::unconstrained(d, diameter > 0 ? diameter : 1.0);
  }
  return Domain::ball(Vec::Zero(d), 1.0);
}

inline EnvSpec parse_env(Reader r, ExperimentKind kind) {
  EnvSpec es;
  switch (kind) {
    case ExperimentKind::static_sim: es.kind = EnvKind::static_similar; break;
    case ExperimentKind::dynamic_drift: es.kind = EnvKind::dynamic_drift; break;
    case ExperimentKind::geometry: es.kind = EnvKind::coordinate_geometry; break;
    case ExperimentKind::batch: es.kind = EnvKind::distributional; break;
    case ExperimentKind::federated: break;
  }
  es.d = r.integer("dimensions", 1);
  if (es.d < 1) r.err("dimensions", "must be >= 1");
  es.num_tasks = r.integer("tasks", 1);
  if (es.num_tasks < 1) r.err("tasks", "must be >= 1");
  es.m = r.integer("samples_per_task", 1);
  if (es.m < 1) r.err("samples_per_task", "must be >= 1");
  es.family = r.choice<LossFamily>("family", LossFamily::quadratic,
                                   {{"quadratic", LossFamily::quadratic},
                                    {"logistic", LossFamily::logistic}});
  es.lipschitz = r.number("lipschitz", 1.0);
  if (es.lipschitz <= 0.0) r.err("lipschitz", "must be > 0");
  es.deviation = r.number("deviation", 0.0);
  if (es.deviation < 0.0) r.err("deviation", "must be >= 0");
  es.task_noise = r.number("task_noise", 0.0);
  if (es.task_noise < 0.0) r.err("task_noise", "must be >= 0");
  if (r.present("anchor")) {
    es.phi_star = to_vec(r.number_list("anchor"));
    if (es.phi_star.size() != es.d) r.err("anchor", "dimension mismatch");
  }
  es.domain = parse_domain(r.child("domain"), es.d);

  if (kind == ExperimentKind::dynamic_drift) {
    for (Reader& pr : r.children("phases")) {
      DriftPhase phase;
      phase.center = to_vec(pr.number_list("center"));
      if (phase.center.size() != es.d) pr.err("center", "dimension mismatch");
      phase.length = pr.integer("length", 0);
      if (phase.length < 1) pr.err("length", "must be >= 1");
      pr.done();
      es.phases.push_back(std::move(phase));
    }
    es.walk_step = r.number("walk_step", 0.0);
    if (es.walk_step < 0.0) r.err("walk_step", "must be >= 0");
    if (es.phases.empty() && es.walk_step == 0.0) {
      r.err("phases", "dynamic experiments need phases or a positive walk_step");
    }
  } else if (kind == ExperimentKind::geometry) {
    es.coord_dev = to_vec(r.number_list("coordinate_deviations"));
    if (es.coord_dev.size() != es.d) r.err("coordinate_deviations", "dimension mismatch");
    es.rotation_deg = r.number("rotation_degrees", 0.0);
  } else if (kind == ExperimentKind::batch) {
    es.dispersion = r.number("dispersion", 0.0);
    if (es.dispersion < 0.0) r.err("dispersion", "must be >= 0");
  }
  r.done();
  return es;
}

inline MetaRunConfig parse_meta(Reader r) {
  MetaRunConfig mc;
  mc.init = r.choice<InitStrategy>("init", InitStrategy::ftl_mean,
                                   {{"ftl_mean", InitStrategy::ftl_mean},
                                    {"aogd", InitStrategy::aogd},
                                    {"ogd_dynamic", InitStrategy::ogd_dynamic}});
  mc.lambda = r.number("lambda", 1.0);
  if (!(mc.lambda > 0.0 && mc.lambda <= 1.0)) r.err("lambda", "must lie in (0, 1]");
  mc.scale = r.choice<ScaleMode>("scale", ScaleMode::eps_ftl,
                                 {{"fixed", ScaleMode::fixed_scalar},
                                  {"eps_ftl", ScaleMode::eps_ftl},
                                  {"eps_ewoo", ScaleMode::eps_ewoo},
                                  {"per_coordinate", ScaleMode::per_coordinate},
                                  {"isotropic", ScaleMode::isotropic},
                                  {"full_matrix", ScaleMode::full_matrix}});
  mc.fixed_v = r.number("fixed_v", 0.0);
  if (mc.scale == ScaleMode::fixed_scalar && mc.fixed_v <= 0.0) {
    r.err("fixed_v", "fixed scale needs a positive value");
  }
  mc.epsilon = r.number("epsilon", -1.0);
  if (r.present("epsilon") && mc.epsilon <= 0.0) r.err("epsilon", "must be > 0");
  mc.zeta = r.number("zeta", -1.0);
  if (r.present("zeta") && mc.zeta <= 0.0) r.err("zeta", "must be > 0");
  mc.decay = r.number("decay", 0.4);
  if (!(mc.decay >= 0.0 && mc.decay <= 1.0)) r.err("decay", "must lie in [0, 1]");
  mc.within = r.choice<WithinMode>("within", WithinMode::omd_linearized,
                                   {{"omd", WithinMode::omd_linearized},
                                    {"ftrl", WithinMode::ftrl_full}});
  mc.vector = r.choice<MetaVector>("vector", MetaVector::optimal_action,
                                   {{"optimal_action", MetaVector::optimal_action},
                                    {"last_iterate", MetaVector::last_iterate},
                                    {"average_iterate", MetaVector::average_iterate}});
  mc.geometry = r.choice<Geometry>("geometry", Geometry::euclidean,
                                   {{"euclidean", Geometry::euclidean},
                                    {"negative_entropy", Geometry::negative_entropy}});
  r.done();
  return mc;
}

inline FederatedBlock parse_federated(Reader r) {
  FederatedBlock fb;
  fb.population.num_clients = r.integer("clients", 100);
  if (fb.population.num_clients < 2) r.err("clients", "must be >= 2");
  fb.population.d = r.integer("dimensions", 10);
  if (fb.population.d < 1) r.err("dimensions", "must be >= 1");
  fb.population.samples = r.integer("samples_per_client", 40);
  if (fb.population.samples < 2) r.err("samples_per_client", "must be >= 2");
  fb.population.train_fraction = r.number("train_fraction", 0.8);
  if (!(fb.population.train_fraction > 0.0 && fb.population.train_fraction < 1.0)) {
    r.err("train_fraction", "must lie in (0, 1)");
  }
  fb.population.dispersion = r.number("dispersion", 0.5);
  if (fb.population.dispersion < 0.0) r.err("dispersion", "must be >= 0");
  fb.population.sample_noise = r.number("sample_noise", 0.2);
  if (fb.population.sample_noise < 0.0) r.err("sample_noise", "must be >= 0");
  if (r.present("center")) {
    fb.population.center = to_vec(r.number_list("center"));
    if (fb.population.center.size() != fb.population.d) r.err("center", "dimension mismatch");
  }
  fb.population.family = r.choice<LossFamily>("family", LossFamily::quadratic,
                                              {{"quadratic", LossFamily::quadratic},
                                               {"logistic", LossFamily::logistic}});
  fb.rounds = r.integer("rounds", 200);
  if (fb.rounds < 1) r.err("rounds", "must be >= 1");
  fb.fed.clients_per_round = r.integer("clients_per_round", 10);
  if (fb.fed.clients_per_round < 1) r.err("clients_per_round", "must be >= 1");
  fb.fed.local_steps = r.integer("local_steps", 10);
  if (fb.fed.local_steps < 1) r.err("local_steps", "must be >= 1");
  fb.fed.batch_size = r.integer("batch_size", 10);
  if (fb.fed.batch_size < 1) r.err("batch_size", "must be >= 1");
  fb.fed.mode = r.choice<FedScaleMode>("mode", FedScaleMode::per_coordinate,
                                       {{"vanilla", FedScaleMode::vanilla},
                                        {"isotropic", FedScaleMode::isotropic},
                                        {"per_coordinate", FedScaleMode::per_coordinate}});
  fb.fed.epsilon = r.number("epsilon", 0.05);
  if (fb.fed.epsilon <= 0.0) r.err("epsilon", "must be > 0");
  fb.fed.zeta = r.number("zeta", 0.05);
  if (fb.fed.zeta <= 0.0) r.err("zeta", "must be > 0");
  fb.fed.p = r.number("p", 1.0);
  if (fb.fed.p < 0.0) r.err("p", "must be >= 0");
  fb.fed.fixed_eta = r.number("fixed_eta", 0.1);
  if (fb.fed.mode == FedScaleMode::vanilla && fb.fed.fixed_eta <= 0.0) {
    r.err("fixed_eta", "vanilla mode needs a positive rate");
  }
  fb.fed.refine_damping = r.number("refine_damping", 1.0);
  if (fb.fed.refine_damping <= 0.0) r.err("refine_damping", "must be > 0");
  fb.meta_fraction = r.number("meta_fraction", 0.8);
  if (!(fb.meta_fraction > 0.0 && fb.meta_fraction < 1.0)) {
    r.err("meta_fraction", "must lie in (0, 1)");
  }
  fb.refine_steps = r.integer("refine_steps", 10);
  if (fb.refine_steps < 0) r.err("refine_steps", "must be >= 0");
  r.done();
  return fb;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errors;
  Json root = Json::parse(text, nullptr, false);
  if (root.is_discarded()) {
    errors.push_back("config: not valid JSON");
    throw ConfigError(std::move(errors));
  }
  if (!root.is_object()) {
    errors.push_back("config: top level must be an object");
    throw ConfigError(std::move(errors));
  }

  detail::Reader r(&root, "", &errors);
  ExperimentConfig cfg;
  cfg.id = r.text("experiment", "", true);
  if (!cfg.id.empty()) {
    for (char c : cfg.id) {
      bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
      if (!ok) {
        r.err("experiment", "id may use letters, digits, '_', '-', '.' only");
        break;
      }
    }
  } else if (r.present("experiment")) {
    r.err("experiment", "id must be non-empty");
  }
  cfg.kind = r.choice<ExperimentKind>("kind", ExperimentKind::static_sim,
                                      {{"static", ExperimentKind::static_sim},
                                       {"dynamic", ExperimentKind::dynamic_drift},
                                       {"geometry", ExperimentKind::geometry},
                                       {"batch", ExperimentKind::batch},
                                       {"federated", ExperimentKind::federated}},
                                      true);
  if (r.present("seeds")) {
    cfg.seeds = r.seed_list("seeds");
    if (cfg.seeds.empty()) r.err("seeds", "need at least one seed");
  }
  cfg.repetitions = r.integer("repetitions", 1);
  if (cfg.repetitions < 1) r.err("repetitions", "must be >= 1");
  cfg.output = r.text("output", cfg.id.empty() ? "experiment.csv" : cfg.id + ".csv");

  if (cfg.kind == ExperimentKind::federated) {
    if (r.present("env")) r.err("env", "federated experiments use the federated block");
    if (r.present("meta")) r.err("meta", "federated experiments use the federated block");
    cfg.federated = detail::parse_federated(r.child("federated", true));
  } else {
    if (r.present("federated")) {
      r.err("federated", "only federated experiments take this block");
    }
    cfg.env = detail::parse_env(r.child("env", true), cfg.kind);
    cfg.meta = detail::parse_meta(r.child("meta"));
    bool scalar_scale = cfg.meta.scale == ScaleMode::fixed_scalar ||
                        cfg.meta.scale == ScaleMode::eps_ftl ||
                        cfg.meta.scale == ScaleMode::eps_ewoo;
    if (cfg.kind == ExperimentKind::batch) {
      cfg.heldout_tasks = r.integer("heldout_tasks", 20);
      if (cfg.heldout_tasks < 1) r.err("heldout_tasks", "must be >= 1");
      cfg.risk_samples = r.integer("risk_samples", 400);
      if (cfg.risk_samples < 1) r.err("risk_samples", "must be >= 1");
      if (!scalar_scale) r.err("meta.scale", "batch experiments need a scalar scale mode");
    }
  }
  r.done();

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"config: cannot read file " + path});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace detail {

inline void append_row(std::string& csv, const std::string& experiment, std::uint64_t seed,
                       int t, const char* metric, double value) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%" PRIu64 ",%d,%s,%.17g\n", experiment.c_str(), seed, t,
                metric, value);
  csv += buf;
}

struct SeedOutcome {
  std::string csv;
  Json summary;
  bool ok = true;
  std::string error;
};

inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome out;
  out.summary["seed"] = seed;
  try {
    if (cfg.kind == ExperimentKind::federated) {
      ClientPopulationSpec pop = cfg.federated.population;
      pop.seed = seed;
      std::vector<Client> pool = make_clients(pop);
      auto [meta_clients, heldout] = split_clients(pool, cfg.federated.meta_fraction);
      FedRunResult run = run_federated(meta_clients, cfg.federated.fed, cfg.federated.rounds, seed);
      for (const RoundRecord& rec : run.server.ledger) {
        append_row(out.csv, cfg.id, seed, rec.round, "eta_min", rec.eta_min);
        append_row(out.csv, cfg.id, seed, rec.round, "eta_mean", rec.eta_mean);
        append_row(out.csv, cfg.id, seed, rec.round, "eta_max", rec.eta_max);
        append_row(out.csv, cfg.id, seed, rec.round, "payload_scalars",
                   static_cast<double>(rec.uplink_scalars + rec.downlink_scalars));
      }
      auto recs = personalize_eval(run.server, cfg.federated.fed, heldout,
                                   cfg.federated.refine_steps);
      double pre = 0.0, post = 0.0;
      for (const auto& rec : recs) {
        pre += rec.pre;
        post += rec.post;
      }
      pre /= recs.empty() ? 1.0 : static_cast<double>(recs.size());
      post /= recs.empty() ? 1.0 : static_cast<double>(recs.size());
      append_row(out.csv, cfg.id, seed, cfg.federated.rounds, "risk", post);
      out.summary["risk"] = post;
      out.summary["risk_before_refinement"] = pre;
      out.summary["refine_steps"] = cfg.federated.refine_steps;
      out.summary["final_eta_mean"] = run.server.ledger.back().eta_mean;
      out.summary["payload_uplink"] = run.uplink_total;
      out.summary["payload_downlink"] = run.downlink_total;
      out.summary["payload_scalars"] = run.uplink_total + run.downlink_total;
      return out;
    }

    EnvSpec es = cfg.env;
    es.seed = seed;
    Environment env(es);
    MetaRunResult res = run_meta_stream(cfg.meta, env);
    bool scalar_scale = cfg.meta.scale == ScaleMode::fixed_scalar ||
                        cfg.meta.scale == ScaleMode::eps_ftl ||
                        cfg.meta.scale == ScaleMode::eps_ewoo;
    for (const LedgerRow& row : res.ledger) {
      append_row(out.csv, cfg.id, seed, row.t, "tar", row.tar);
      append_row(out.csv, cfg.id, seed, row.t, "rub", row.rub);
      append_row(out.csv, cfg.id, seed, row.t, "regret", row.regret);
      append_row(out.csv, cfg.id, seed, row.t, "ub", row.ub);
      if (scalar_scale) append_row(out.csv, cfg.id, seed, row.t, "v", row.v);
      append_row(out.csv, cfg.id, seed, row.t, "eta_min", row.eta_min);
      append_row(out.csv, cfg.id, seed, row.t, "eta_mean", row.eta_mean);
      append_row(out.csv, cfg.id, seed, row.t, "eta_max", row.eta_max);
    }
    int final_t = res.ledger.back().t;
    out.summary["final_tar"] = res.ledger.back().tar;
    out.summary["final_rub"] = res.ledger.back().rub;
    if (cfg.kind == ExperimentKind::dynamic_drift) {
      append_row(out.csv, cfg.id, seed, final_t, "path_length", env.path_length());
      out.summary["path_length"] = env.path_length();
    }
    if (cfg.kind == ExperimentKind::batch) {
      BatchState batch = online_to_batch(res);
      RiskEstimate risk =
          transfer_risk_estimate(batch.phi, batch.v, env, cfg.heldout_tasks, es.m,
                                 cfg.risk_samples, cfg.meta.within, cfg.meta.geometry);
      append_row(out.csv, cfg.id, seed, final_t, "risk", risk.mean);
      out.summary["risk"] = risk.mean;
      out.summary["risk_std_error"] = risk.std_error;
    }
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.summary["error"] = e.what();
  }
  return out;
}

}  // namespace detail

struct ExperimentOutcome {
  std::string csv;  // header plus seed blocks in config order
  Json summary;
  bool ok = true;
};

// Executes every seed x repetition unit, fanning out over a bounded worker
// pool.  Assembly order is fixed by the config, so worker count cannot change
// the output.  Repetitions re-run a seed and must reproduce its bytes; any
// divergence is reported as a run failure.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
  require(jobs >= 1, "run_experiment: jobs must be >= 1");
  const int units_per_seed = cfg.repetitions;
  const int n_units = static_cast<int>(cfg.seeds.size()) * units_per_seed;
  std::vector<detail::SeedOutcome> slots(n_units);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n_units) return;
      std::uint64_t seed = cfg.seeds[i / units_per_seed];
      slots[i] = detail::run_seed(cfg, seed);
    }
  };
  int n_workers = std::min(jobs, n_units);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  ExperimentOutcome out;
  out.csv = "experiment,seed,t,metric,value\n";
  Json per_seed = Json::array();
  std::vector<std::string> errors;
  for (size_t s = 0; s < cfg.seeds.size(); ++s) {
    const detail::SeedOutcome& first = slots[s * units_per_seed];
    for (int rep = 1; rep < units_per_seed; ++rep) {
      const detail::SeedOutcome& other = slots[s * units_per_seed + rep];
      if (other.csv != first.csv) {
        errors.push_back("seed " + std::to_string(cfg.seeds[s]) +
                         ": repetition " + std::to_string(rep) + " diverged");
      }
    }
    if (!first.ok) {
      errors.push_back("seed " + std::to_string(cfg.seeds[s]) + ": " + first.error);
    }
    out.csv += first.csv;
    per_seed.push_back(first.summary);
  }

  out.summary["experiment"] = cfg.id;
  out.summary["kind"] = to_string(cfg.kind);
  out.summary["repetitions"] = cfg.repetitions;
  out.summary["seeds"] = cfg.seeds;
  out.summary["per_seed"] = per_seed;
  Json aggregate;
  auto mean_of = [&](const char* key) -> Json {
    double sum = 0.0;
    int n = 0;
    for (const auto& item : per_seed) {
      if (item.contains(key)) {
        sum += item[key].get<double>();
        ++n;
      }
    }
    if (n == 0) return nullptr;
    return sum / n;
  };
  for (const char* key : {"final_tar", "final_rub", "risk", "path_length"}) {
    Json m = mean_of(key);
    if (!m.is_null()) aggregate[std::string("mean_") + key] = m;
  }
  long long payload = 0;
  bool has_payload = false;
  for (const auto& item : per_seed) {
    if (item.contains("payload_scalars")) {
      payload += item["payload_scalars"].get<long long>();
      has_payload = true;
    }
  }
  if (has_payload) aggregate["payload_scalars_total"] = payload;
  out.summary["aggregate"] = aggregate;
  out.summary["partial"] = !errors.empty();
  out.summary["errors"] = errors;
  out.ok = errors.empty();
  return out;
}

// out.csv -> out.summary.json; other extensions just gain the suffix.
inline std::string summary_path_for(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  if (p.extension() == ".csv") p.replace_extension();
  p += ".summary.json";
  return p.string();
}

struct WrittenFiles {
  std::string csv_path;
  std::string summary_path;
  bool ok = true;
};

inline WrittenFiles write_experiment_files(const ExperimentConfig& cfg,
                                           const ExperimentOutcome& outcome,
                                           const std::string& out_override = "") {
  WrittenFiles files;
  files.csv_path = out_override.empty() ? cfg.output : out_override;
  files.summary_path = summary_path_for(files.csv_path);
  std::filesystem::path parent = std::filesystem::path(files.csv_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  {
    std::ofstream csv(files.csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + files.csv_path);
    csv << outcome.csv;
  }
  {
    std::ofstream js(files.summary_path, std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + files.summary_path);
    js << outcome.summary.dump(2) << "\n";
  }
  files.ok = outcome.ok;
  return files;
}

}  // namespace aruba
