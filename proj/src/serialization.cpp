#include "cbed/serialization.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cbed {

namespace {

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw std::invalid_argument(std::string("missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw std::invalid_argument("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Json to_json(const Dag& dag) {
  Json edges = Json::array();
  for (const auto& [i, j] : dag.edges()) edges.push_back(Json::array({i, j}));
  Json out;
  out["d"] = dag.size();
  out["edges"] = std::move(edges);
  return out;
}

Dag dag_from_json(const Json& j) {
  const auto d = field(j, "d").get<std::size_t>();
  std::vector<Edge> edges;
  for (const auto& e : field(j, "edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("edge must be a [parent, child] pair");
    edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }
  return Dag(d, std::move(edges));
}

Json to_json(const Scm& scm) {
  Json out = to_json(scm.dag());
  out["weights"] = to_json(scm.weights());
  Json noise = Json::array();
  for (Eigen::Index i = 0; i < scm.noise_vars().size(); ++i) noise.push_back(scm.noise_vars()(i));
  out["noise_vars"] = std::move(noise);
  return out;
}

Scm scm_from_json(const Json& j) {
  Dag dag = dag_from_json(j);
  Eigen::MatrixXd w = matrix_from_json(field(j, "weights"));
  const auto& nv = field(j, "noise_vars");
  Eigen::VectorXd noise(static_cast<Eigen::Index>(nv.size()));
  for (std::size_t i = 0; i < nv.size(); ++i) noise(static_cast<Eigen::Index>(i)) = nv[i].get<double>();
  return Scm(std::move(dag), std::move(w), std::move(noise));
}

Json to_json(const Design& design) {
  Json out;
  out["targets"] = design.targets;
  out["states"] = design.states;
  return out;
}

Design design_from_json(const Json& j) {
  Design d;
  d.targets = field(j, "targets").get<std::vector<std::size_t>>();
  d.states = field(j, "states").get<std::vector<double>>();
  if (d.targets.size() != d.states.size()) throw std::invalid_argument("design needs one state per target");
  return d;
}

Json to_json(const DesignBatch& batch) {
  Json out = Json::array();
  for (const auto& d : batch) out.push_back(to_json(d));
  return out;
}

Json to_json(const ParticleSet& particles) {
  Json list = Json::array();
  for (const auto& p : particles.particles) list.push_back(to_json(p));
  Json out;
  out["particles"] = std::move(list);
  out["weights"] = particles.weights;
  if (particles.log_hist_lik) out["log_hist_lik"] = *particles.log_hist_lik;
  return out;
}

ParticleSet particles_from_json(const Json& j) {
  ParticleSet set;
  for (const auto& p : field(j, "particles")) set.particles.push_back(scm_from_json(p));
  set.weights = field(j, "weights").get<std::vector<double>>();
  if (j.contains("log_hist_lik")) set.log_hist_lik = j.at("log_hist_lik").get<std::vector<double>>();
  if (set.log_hist_lik && set.log_hist_lik->size() != set.size()) {
    throw std::invalid_argument("log_hist_lik must cover every particle");
  }
  set.validate();
  return set;
}

Json to_json(const PolicyParams& params) {
  Json out;
  out["mode"] = to_string(params.mode);
  out["k"] = params.k;
  out["target_logits"] = to_json(params.target_logits);
  out["state_values"] = to_json(params.state_values);
  out["temperature"] = params.temperature;
  return out;
}

PolicyParams policy_from_json(const Json& j) {
  PolicyParams p;
  p.mode = parse_policy_mode(field(j, "mode").get<std::string>());
  p.k = field(j, "k").get<std::size_t>();
  p.target_logits = matrix_from_json(field(j, "target_logits"));
  p.state_values = matrix_from_json(field(j, "state_values"));
  p.temperature = field(j, "temperature").get<double>();
  p.validate();
  return p;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(in);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace cbed
