#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cbed/rng.hpp"

namespace cbed {

using Edge = std::pair<std::size_t, std::size_t>;

/// Directed acyclic graph over vertices 0..d-1. Edges are kept sorted and the
/// topological order is computed once at construction.
class Dag {
 public:
  Dag() = default;
  /// Throws GraphError on self-loops, duplicates, out-of-range indices or cycles.
  Dag(std::size_t d, std::vector<Edge> edges);

  static Dag empty(std::size_t d) { return Dag(d, {}); }

  std::size_t size() const { return d_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  bool has_edge(std::size_t from, std::size_t to) const;
  const std::vector<std::size_t>& parents(std::size_t j) const { return parents_[j]; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  const std::vector<std::size_t>& topological_order() const { return order_; }

  friend bool operator==(const Dag& a, const Dag& b) { return a.d_ == b.d_ && a.edges_ == b.edges_; }

 private:
  std::size_t d_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> order_;
};

/// Kahn's algorithm, smallest ready index first. Throws GraphError on a cycle.
std::vector<std::size_t> topological_order(std::size_t d, const std::vector<Edge>& edges);

/// Linear-Gaussian structural causal model. weights(i, j) is the coefficient of
/// parent i in the mechanism of child j.
class Scm {
 public:
  Scm() = default;
  Scm(Dag dag, Eigen::MatrixXd weights, Eigen::VectorXd noise_vars);

  std::size_t size() const { return dag_.size(); }
  const Dag& dag() const { return dag_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& noise_vars() const { return noise_vars_; }

  friend bool operator==(const Scm& a, const Scm& b) {
    return a.dag_ == b.dag_ && a.weights_ == b.weights_ && a.noise_vars_ == b.noise_vars_;
  }

 private:
  Dag dag_;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd noise_vars_;
};

/// do(X_I = S^I). An empty target set is the observational regime.
struct Design {
  std::vector<std::size_t> targets;  // sorted, unique
  std::vector<double> states;        // states[k] belongs to targets[k]

  static Design observational() { return {}; }
  bool is_observational() const { return targets.empty(); }
  /// Throws std::invalid_argument if targets are unsorted/duplicated/out of range
  /// or the state count does not match.
  void validate(std::size_t d) const;
  /// Indicator vector of length d.
  Eigen::VectorXd mask(std::size_t d) const;
  /// Dense state vector of length d (zero where not intervened).
  Eigen::VectorXd dense_states(std::size_t d) const;

  friend bool operator==(const Design&, const Design&) = default;
};

/// Builds a design from unsorted (target, state) pairs.
Design make_design(std::vector<std::pair<std::size_t, double>> assignments);

using DesignBatch = std::vector<Design>;

struct SampleMatrix {
  Eigen::MatrixXd values;  // n x d
  Design provenance;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

/// Ancestral sampling under `design`; intervened columns are set exactly to their states.
SampleMatrix sample(const Scm& scm, const Design& design, std::size_t n, Rng& rng);

/// Interventional log-likelihood: sum over non-intervened j of log N(y_j; w_j . y, sigma_j^2).
double log_likelihood(const Scm& scm, const Eigen::Ref<const Eigen::VectorXd>& y, const Design& design);

/// Sum of per-design log-likelihoods; outcomes[b] pairs with designs[b].
double batch_log_likelihood(const Scm& scm, std::span<const Eigen::VectorXd> outcomes, const DesignBatch& designs);

/// log N(x; mean, var) in the form -0.5 * (r^2 / var + log var + log 2 pi).
double log_normal_density(double x, double mean, double var);

}  // namespace cbed
