#pragma once

#include <cstddef>
#include <vector>

#include "cbed/particles.hpp"
#include "cbed/priors.hpp"
#include "cbed/rng.hpp"
#include "cbed/scm.hpp"

namespace cbed {

/// Sum of record log-likelihoods under one SCM.
double history_log_likelihood(const Scm& scm, const Dataset& data);

/// Sets log_hist_lik = log p(h | theta_l) and weights = softmax(log_hist_lik).
ParticleSet attach_history(ParticleSet particles, const Dataset& data);

/// 1 / sum(w^2).
double effective_sample_size(const ParticleSet& particles);

/// All labelled DAGs on d vertices (1, 3, 25, 543 for d = 1..4).
std::vector<Dag> enumerate_dags(std::size_t d);

/// log P(g) under "uniform node order, then independent edges with probability p",
/// marginalized over all orders.
double graph_log_prior(const Dag& dag, double edge_prob);

struct ExactPosteriorOptions {
  std::size_t particles_per_graph = 100;
  std::size_t max_dim = 4;
};

/// Enumerates every DAG, draws parameter particles from the prior per graph and
/// weights each particle by P(g) p(data | theta) (self-normalized). Throws
/// CapabilityError when d exceeds max_dim.
ParticleSet exact_posterior(const Dataset& data, const PriorSpec& spec, const ExactPosteriorOptions& options, Rng& rng);

/// Posterior probability mass of graphs containing the edge from -> to.
double edge_posterior(const ParticleSet& particles, std::size_t from, std::size_t to);

// ---- structure learning / bootstrap ------------------------------------------

struct LearnerOptions {
  std::size_t restarts = 5;
  std::size_t max_parents = 8;
  double restart_edge_prob = 0.2;
};

/// Greedy hill climbing over single-edge insert/delete/reverse moves, scored by
/// BIC with interventional likelihoods (records intervening on a node are
/// excluded from that node's local score). Restart 0 starts from the empty
/// graph; further restarts start from random DAGs. Returns the best graph seen.
Dag learn_structure(const Dataset& data, const LearnerOptions& options, Rng& rng);

/// BIC of a whole graph (sum of node scores); exposed for tests.
double bic_score(const Dataset& data, const Dag& dag);

/// Least-squares weights and residual-mean-square noise variances per node, using
/// only records where the node is not intervened. Ridge 1e-6 and variance floor
/// 1e-6 when a node has no more usable records than parents.
Scm fit_parameters(const Dataset& data, const Dag& dag);

struct BootstrapOptions {
  std::size_t replicates = 30;
  LearnerOptions learner;
};

/// Resamples records with replacement within each regime (records sharing a
/// target set), learns a structure and fits parameters per replicate.
/// Replicate k uses substream k of `rng`. Uniform weights.
ParticleSet bootstrap_posterior(const Dataset& data, const BootstrapOptions& options, Rng& rng);

/// The stratified resample used by bootstrap_posterior.
Dataset stratified_resample(const Dataset& data, Rng& rng);

}  // namespace cbed
