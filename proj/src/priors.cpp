#include "cbed/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cbed/errors.hpp"

namespace cbed {

double PriorSpec::pair_probability() const {
  if (edge_prob.has_value() == expected_edges_per_vertex.has_value()) {
    throw ConfigError("exactly one of edge_prob / expected_edges_per_vertex must be set");
  }
  double p = 0.0;
  if (edge_prob) {
    p = *edge_prob;
  } else {
    if (!(*expected_edges_per_vertex > 0.0)) throw ConfigError("expected_edges_per_vertex must be positive");
    p = d > 1 ? *expected_edges_per_vertex / static_cast<double>(d - 1) : 0.0;
  }
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("derived edge probability is outside [0, 1]");
  return p;
}

void PriorSpec::validate() const {
  if (d < 1) throw ConfigError("prior dimension must be at least 1");
  (void)pair_probability();
  if (!(weight_var >= 0.0) || !std::isfinite(weight_mean)) throw ConfigError("invalid weight distribution");
  if (noise.kind == NoiseRule::Kind::Fixed && !(noise.value > 0.0)) throw ConfigError("fixed noise variance must be positive");
  if (noise.kind == NoiseRule::Kind::SquaredNormal && !(noise.floor > 0.0)) throw ConfigError("noise floor must be positive");
}

PriorSpec PriorSpec::particle_default(std::size_t d) {
  PriorSpec spec;
  spec.d = d;
  spec.edge_prob = 0.25;
  spec.noise.kind = NoiseRule::Kind::SquaredNormal;
  return spec;
}

PriorSpec PriorSpec::environment_default(std::size_t d) {
  PriorSpec spec;
  spec.d = d;
  spec.expected_edges_per_vertex = 1.0;
  spec.noise.kind = NoiseRule::Kind::Fixed;
  spec.noise.value = 1.0;
  return spec;
}

Dag sample_dag(const PriorSpec& spec, Rng& rng) {
  spec.validate();
  const double p = spec.pair_probability();
  std::vector<std::size_t> order(spec.d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < spec.d; ++a) {
    for (std::size_t b = a + 1; b < spec.d; ++b) {
      if (rng.bernoulli(p)) edges.emplace_back(order[a], order[b]);
    }
  }
  return Dag(spec.d, std::move(edges));
}

Scm sample_parameters(const Dag& dag, const PriorSpec& spec, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(dag.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  const double sd = std::sqrt(spec.weight_var);
  for (const auto& [from, to] : dag.edges()) {
    w(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to)) = spec.weight_mean + sd * rng.normal();
  }
  Eigen::VectorXd noise(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (spec.noise.kind == NoiseRule::Kind::Fixed) {
      noise(j) = spec.noise.value;
    } else {
      const double x = rng.normal();
      noise(j) = std::max(x * x, spec.noise.floor);
    }
  }
  return Scm(dag, std::move(w), std::move(noise));
}

Scm sample_scm(const PriorSpec& spec, Rng& rng) {
  Dag dag = sample_dag(spec, rng);
  return sample_parameters(dag, spec, rng);
}

ParticleSet sample_particles(const PriorSpec& spec, std::size_t count, Rng& rng) {
  if (count < 2) throw std::invalid_argument("at least two particles are required");
  spec.validate();
  std::vector<Scm> particles;
  particles.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng sub = rng.substream(i);
    particles.push_back(sample_scm(spec, sub));
  }
  return ParticleSet::uniform(std::move(particles));
}

}  // namespace cbed
