#include "cbed/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cbed/errors.hpp"

namespace cbed {

double history_log_likelihood(const Scm& scm, const Dataset& data) {
  double total = 0.0;
  for (const auto& r : data.records()) total += log_likelihood(scm, r.y, r.design);
  return total;
}

ParticleSet attach_history(ParticleSet particles, const Dataset& data) {
  std::vector<double> log_hist(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) log_hist[i] = history_log_likelihood(particles.particles[i], data);
  particles.weights = softmax(log_hist);
  particles.log_hist_lik = std::move(log_hist);
  return particles;
}

double effective_sample_size(const ParticleSet& particles) {
  double sq = 0.0;
  for (double w : particles.weights) sq += w * w;
  return 1.0 / sq;
}

std::vector<Dag> enumerate_dags(std::size_t d) {
  if (d > 5) throw CapabilityError("DAG enumeration is limited to d <= 5");
  std::vector<Edge> pairs;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  std::vector<Dag> dags;
  const std::uint64_t total = std::uint64_t{1} << pairs.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    std::vector<Edge> edges;
    bool two_cycle = false;
    for (std::size_t e = 0; e < pairs.size() && !two_cycle; ++e) {
      if (!(mask >> e & 1U)) continue;
      const auto [i, j] = pairs[e];
      if (i > j && std::find(edges.begin(), edges.end(), Edge{j, i}) != edges.end()) two_cycle = true;
      edges.push_back(pairs[e]);
    }
    if (two_cycle) continue;
    try {
      dags.emplace_back(d, std::move(edges));
    } catch (const GraphError&) {
    }
  }
  return dags;
}

double graph_log_prior(const Dag& dag, double edge_prob) {
  const std::size_t d = dag.size();
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> position(d);
  double consistent = 0.0;
  double orders = 0.0;
  do {
    for (std::size_t k = 0; k < d; ++k) position[perm[k]] = k;
    orders += 1.0;
    bool ok = true;
    for (const auto& [from, to] : dag.edges()) {
      if (position[from] > position[to]) {
        ok = false;
        break;
      }
    }
    if (ok) consistent += 1.0;
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double pairs = static_cast<double>(d * (d - 1) / 2);
  const double e = static_cast<double>(dag.edge_count());
  const double lik = std::pow(edge_prob, e) * std::pow(1.0 - edge_prob, pairs - e);
  return std::log(lik * consistent / orders);
}

ParticleSet exact_posterior(const Dataset& data, const PriorSpec& spec, const ExactPosteriorOptions& options, Rng& rng) {
  spec.validate();
  if (spec.d > options.max_dim) {
    throw CapabilityError("exact posterior supports d <= " + std::to_string(options.max_dim) + ", got d=" +
                          std::to_string(spec.d));
  }
  if (options.particles_per_graph < 1) throw std::invalid_argument("particles_per_graph must be at least 1");
  const double p = spec.pair_probability();
  const auto dags = enumerate_dags(spec.d);
  const double log_m = std::log(static_cast<double>(options.particles_per_graph));

  std::vector<Scm> particles;
  std::vector<double> log_weights;
  for (std::size_t g = 0; g < dags.size(); ++g) {
    const double log_prior = graph_log_prior(dags[g], p);
    if (!std::isfinite(log_prior)) continue;
    for (std::size_t m = 0; m < options.particles_per_graph; ++m) {
      // common random numbers across graphs: draw m uses the same stream for every graph
      Rng sub = rng.substream(m);
      Scm scm = sample_parameters(dags[g], spec, sub);
      log_weights.push_back(log_prior - log_m + history_log_likelihood(scm, data));
      particles.push_back(std::move(scm));
    }
  }
  ParticleSet set;
  set.weights = softmax(log_weights);
  set.particles = std::move(particles);
  return set;
}

double edge_posterior(const ParticleSet& particles, std::size_t from, std::size_t to) {
  double mass = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    if (particles.particles[i].dag().has_edge(from, to)) mass += particles.weights[i];
  }
  return mass;
}

}  // namespace cbed
