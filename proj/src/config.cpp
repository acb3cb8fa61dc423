#include "cbed/config.hpp"

#include <set>

#include "cbed/errors.hpp"

namespace cbed {

std::string to_string(EstimatorKind k) { return k == EstimatorKind::Nmc ? "nmc" : "iwnmc"; }

std::string to_string(PosteriorKind k) {
  switch (k) {
    case PosteriorKind::Exact: return "exact";
    case PosteriorKind::Bootstrap: return "bootstrap";
    case PosteriorKind::None: return "none";
  }
  return "none";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Policy: return "policy";
    case Strategy::RandomFixed: return "random_fixed";
    case Strategy::RandomRandom: return "random_random";
  }
  return "policy";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "policy") return Strategy::Policy;
  if (name == "random_fixed") return Strategy::RandomFixed;
  if (name == "random_random") return Strategy::RandomRandom;
  throw ConfigError("unknown strategy '" + name + "'");
}

namespace {

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "nmc") return EstimatorKind::Nmc;
  if (name == "iwnmc") return EstimatorKind::Iwnmc;
  throw ConfigError("unknown estimator '" + name + "'");
}

PosteriorKind parse_posterior(const std::string& name) {
  if (name == "exact") return PosteriorKind::Exact;
  if (name == "bootstrap") return PosteriorKind::Bootstrap;
  if (name == "none") return PosteriorKind::None;
  throw ConfigError("unknown posterior '" + name + "'");
}

// Reads keys out of one JSON object and complains about any it never looked at.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_prior(const Json& j, PriorSpec& spec, const std::string& where) {
  Reader r(j, where);
  if (r.has("edge_prob") || r.has("expected_edges_per_vertex")) {
    spec.edge_prob.reset();
    spec.expected_edges_per_vertex.reset();
  }
  r.get_optional("edge_prob", spec.edge_prob);
  r.get_optional("expected_edges_per_vertex", spec.expected_edges_per_vertex);
  r.get("weight_mean", spec.weight_mean);
  r.get("weight_var", spec.weight_var);
  if (const Json* noise = r.child("noise")) {
    Reader n(*noise, where + ".noise");
    std::string kind = spec.noise.kind == NoiseRule::Kind::Fixed ? "fixed" : "squared_normal";
    n.get("kind", kind);
    if (kind == "fixed") spec.noise.kind = NoiseRule::Kind::Fixed;
    else if (kind == "squared_normal") spec.noise.kind = NoiseRule::Kind::SquaredNormal;
    else throw ConfigError(where + ".noise.kind must be 'fixed' or 'squared_normal'");
    n.get("value", spec.noise.value);
    n.get("floor", spec.noise.floor);
    n.finish();
  }
  r.finish();
}

Json prior_json(const PriorSpec& spec) {
  Json out;
  if (spec.edge_prob) out["edge_prob"] = *spec.edge_prob;
  if (spec.expected_edges_per_vertex) out["expected_edges_per_vertex"] = *spec.expected_edges_per_vertex;
  out["weight_mean"] = spec.weight_mean;
  out["weight_var"] = spec.weight_var;
  Json noise;
  noise["kind"] = spec.noise.kind == NoiseRule::Kind::Fixed ? "fixed" : "squared_normal";
  noise["value"] = spec.noise.value;
  noise["floor"] = spec.noise.floor;
  out["noise"] = std::move(noise);
  return out;
}

}  // namespace

double RunConfig::random_fixed_value() const {
  if (random_fixed_state) return *random_fixed_state;
  return mode == PolicyMode::Single ? 0.0 : 5.0;
}

void RunConfig::validate() const {
  if (d < 1) throw ConfigError("d must be at least 1");
  if (B < 1) throw ConfigError("B must be at least 1");
  if (n_per_batch_execution < 1) throw ConfigError("n_per_batch_execution must be at least 1");
  if (mode == PolicyMode::MultiConstrained && (k < 1 || k > d)) throw ConfigError("k must lie in [1, d]");
  if (estimator == EstimatorKind::Nmc && posterior == PosteriorKind::None && !particles_file) {
    throw ConfigError("the nmc estimator needs a posterior");
  }
  if (estimator == EstimatorKind::Nmc && (L < 1 || n_outer < 1)) throw ConfigError("nmc needs L >= 1 and n_outer >= 1");
  if (estimator == EstimatorKind::Iwnmc && L < 2) throw ConfigError("iwnmc needs L >= 2");
  if (C < 1 || O < 1) throw ConfigError("C and O must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (state_learning_rate && !(*state_learning_rate > 0.0)) throw ConfigError("state_learning_rate must be positive");
  if (!(temperature_start > 0.0) || !(temperature_end > 0.0)) throw ConfigError("temperatures must be positive");
  if (temperature_fixed && !(*temperature_fixed > 0.0)) throw ConfigError("temperatures must be positive");
  if (!(state_lo < state_hi)) throw ConfigError("state range must have lo < hi");
  if (posterior == PosteriorKind::Bootstrap && bootstrap_replicates < 1) throw ConfigError("bootstrap needs replicates");
  if (posterior == PosteriorKind::Exact && particles_per_graph < 1) throw ConfigError("particles_per_graph must be >= 1");
  if (immd_designs < 1 || immd_samples < 2) throw ConfigError("i-MMD needs >= 1 design and >= 2 samples");
  if (grid.points < 1 || !(grid.lo <= grid.hi)) throw ConfigError("invalid state grid");
  if (environment_prior.d != d || particle_prior.d != d) throw ConfigError("prior dimension differs from d");
  environment_prior.validate();
  particle_prior.validate();
  for (const auto& design : sample.interventions) design.validate(d);
}

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  Reader r(j, "config");
  r.get("d", c.d);
  c.environment_prior = PriorSpec::environment_default(c.d);
  c.particle_prior = PriorSpec::particle_default(c.d);
  r.get("B", c.B);
  r.get("T", c.T);
  r.get("N", c.N);
  r.get("n_per_batch_execution", c.n_per_batch_execution);

  std::string s = to_string(c.strategy);
  r.get("strategy", s);
  c.strategy = parse_strategy(s);
  s = to_string(c.estimator);
  r.get("estimator", s);
  c.estimator = parse_estimator(s);
  s = to_string(c.posterior);
  r.get("posterior", s);
  c.posterior = parse_posterior(s);
  s = to_string(c.mode);
  r.get("mode", s);
  try {
    c.mode = parse_policy_mode(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.get("k", c.k);

  r.get("L", c.L);
  r.get("n_outer", c.n_outer);
  r.get("ess_floor", c.ess_floor);
  r.get("C", c.C);
  r.get("O", c.O);
  r.get("learning_rate", c.learning_rate);
  r.get_optional("state_learning_rate", c.state_learning_rate);
  r.get("temperature_start", c.temperature_start);
  r.get("temperature_end", c.temperature_end);
  r.get_optional("temperature_fixed", c.temperature_fixed);
  r.get("state_lo", c.state_lo);
  r.get("state_hi", c.state_hi);
  r.get_optional("random_fixed_state", c.random_fixed_state);

  r.get("bootstrap_replicates", c.bootstrap_replicates);
  r.get("learner_restarts", c.learner_restarts);
  r.get("particles_per_graph", c.particles_per_graph);
  r.get_optional("particles_file", c.particles_file);

  if (const Json* p = r.child("environment_prior")) read_prior(*p, c.environment_prior, "environment_prior");
  if (const Json* p = r.child("particle_prior")) read_prior(*p, c.particle_prior, "particle_prior");

  r.get("immd_designs", c.immd_designs);
  r.get("immd_samples", c.immd_samples);

  if (const Json* g = r.child("grid")) {
    Reader gr(*g, "grid");
    gr.get("lo", c.grid.lo);
    gr.get("hi", c.grid.hi);
    gr.get("points", c.grid.points);
    gr.get("specs", c.grid.specs);
    gr.finish();
  }
  if (const Json* sc = r.child("sample")) {
    Reader sr(*sc, "sample");
    sr.get("n", c.sample.n);
    if (const Json* iv = sr.child("interventions")) {
      if (!iv->is_array()) throw ConfigError("sample.interventions must be an array");
      for (const auto& item : *iv) {
        Reader ir(item, "sample.interventions[]");
        std::vector<std::pair<std::size_t, double>> pairs;
        std::vector<std::size_t> targets;
        std::vector<double> states;
        ir.get("targets", targets);
        ir.get("states", states);
        ir.finish();
        if (targets.size() != states.size()) throw ConfigError("intervention needs one state per target");
        for (std::size_t i = 0; i < targets.size(); ++i) pairs.emplace_back(targets[i], states[i]);
        c.sample.interventions.push_back(make_design(std::move(pairs)));
      }
    }
    sr.finish();
  }

  r.get("seed", c.seed);
  r.get_optional("scm_seed", c.scm_seed);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["d"] = c.d;
  j["B"] = c.B;
  j["T"] = c.T;
  j["N"] = c.N;
  j["n_per_batch_execution"] = c.n_per_batch_execution;
  j["strategy"] = to_string(c.strategy);
  j["estimator"] = to_string(c.estimator);
  j["posterior"] = to_string(c.posterior);
  j["mode"] = to_string(c.mode);
  j["k"] = c.k;
  j["L"] = c.L;
  j["n_outer"] = c.n_outer;
  j["ess_floor"] = c.ess_floor;
  j["C"] = c.C;
  j["O"] = c.O;
  j["learning_rate"] = c.learning_rate;
  j["state_learning_rate"] = c.state_learning_rate ? Json(*c.state_learning_rate) : Json(nullptr);
  j["temperature_start"] = c.temperature_start;
  j["temperature_end"] = c.temperature_end;
  j["temperature_fixed"] = c.temperature_fixed ? Json(*c.temperature_fixed) : Json(nullptr);
  j["state_lo"] = c.state_lo;
  j["state_hi"] = c.state_hi;
  j["random_fixed_state"] = c.random_fixed_value();
  j["bootstrap_replicates"] = c.bootstrap_replicates;
  j["learner_restarts"] = c.learner_restarts;
  j["particles_per_graph"] = c.particles_per_graph;
  j["particles_file"] = c.particles_file ? Json(*c.particles_file) : Json(nullptr);
  j["environment_prior"] = prior_json(c.environment_prior);
  j["particle_prior"] = prior_json(c.particle_prior);
  j["immd_designs"] = c.immd_designs;
  j["immd_samples"] = c.immd_samples;
  Json g;
  g["lo"] = c.grid.lo;
  g["hi"] = c.grid.hi;
  g["points"] = c.grid.points;
  g["specs"] = c.grid.specs;
  j["grid"] = std::move(g);
  Json s;
  s["n"] = c.sample.n;
  Json iv = Json::array();
  for (const auto& d : c.sample.interventions) iv.push_back(to_json(d));
  s["interventions"] = std::move(iv);
  j["sample"] = std::move(s);
  j["seed"] = c.seed;
  j["scm_seed"] = c.scm_seed ? Json(*c.scm_seed) : Json(nullptr);
  return j;
}

RunConfig load_config(const std::string& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

}  // namespace cbed
