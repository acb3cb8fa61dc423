#include "cbed/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <stdexcept>
#include <limits>
#include <string>

#include "cbed/errors.hpp"

namespace cbed {

std::vector<std::size_t> topological_order(std::size_t d, const std::vector<Edge>& edges) {
  std::vector<std::size_t> indegree(d, 0);
  std::vector<std::vector<std::size_t>> children(d);
  for (const auto& [from, to] : edges) {
    ++indegree[to];
    children[from].push_back(to);
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < d; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  order.reserve(d);
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t c : children[v]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != d) throw GraphError("graph contains a cycle");
  return order;
}

Dag::Dag(std::size_t d, std::vector<Edge> edges) : d_(d), edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [from, to] = edges_[e];
    if (from >= d_ || to >= d_) {
      throw GraphError("edge (" + std::to_string(from) + "," + std::to_string(to) + ") out of range for d=" +
                       std::to_string(d_));
    }
    if (from == to) throw GraphError("self-loop on vertex " + std::to_string(from));
    if (e > 0 && edges_[e - 1] == edges_[e]) {
      throw GraphError("duplicate edge (" + std::to_string(from) + "," + std::to_string(to) + ")");
    }
  }
  order_ = cbed::topological_order(d_, edges_);
  parents_.assign(d_, {});
  children_.assign(d_, {});
  for (const auto& [from, to] : edges_) {
    parents_[to].push_back(from);
    children_[from].push_back(to);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
}

bool Dag::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

Scm::Scm(Dag dag, Eigen::MatrixXd weights, Eigen::VectorXd noise_vars)
    : dag_(std::move(dag)), weights_(std::move(weights)), noise_vars_(std::move(noise_vars)) {
  const auto d = static_cast<Eigen::Index>(dag_.size());
  if (weights_.rows() != d || weights_.cols() != d) throw std::invalid_argument("weights must be d x d");
  if (noise_vars_.size() != d) throw std::invalid_argument("noise_vars must have length d");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(noise_vars_(i) > 0.0) || !std::isfinite(noise_vars_(i))) {
      throw std::invalid_argument("noise variances must be finite and strictly positive");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!std::isfinite(weights_(i, j))) throw std::invalid_argument("weights must be finite");
      if (weights_(i, j) != 0.0 && !dag_.has_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
        throw std::invalid_argument("nonzero weight on a non-edge");
      }
    }
  }
}

void Design::validate(std::size_t d) const {
  if (states.size() != targets.size()) throw std::invalid_argument("design needs exactly one state per target");
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets[k] >= d) throw std::invalid_argument("design target out of range");
    if (k > 0 && targets[k] <= targets[k - 1]) throw std::invalid_argument("design targets must be sorted and unique");
  }
}

Eigen::VectorXd Design::mask(std::size_t d) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t t : targets) m(static_cast<Eigen::Index>(t)) = 1.0;
  return m;
}

Eigen::VectorXd Design::dense_states(std::size_t d) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < targets.size(); ++k) s(static_cast<Eigen::Index>(targets[k])) = states[k];
  return s;
}

Design make_design(std::vector<std::pair<std::size_t, double>> assignments) {
  std::sort(assignments.begin(), assignments.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Design design;
  for (const auto& [t, s] : assignments) {
    if (!design.targets.empty() && design.targets.back() == t) throw std::invalid_argument("duplicate target");
    design.targets.push_back(t);
    design.states.push_back(s);
  }
  return design;
}

SampleMatrix sample(const Scm& scm, const Design& design, std::size_t n, Rng& rng) {
  const std::size_t d = scm.size();
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");
  design.validate(d);
  std::vector<int> target_slot(d, -1);
  for (std::size_t k = 0; k < design.targets.size(); ++k) target_slot[design.targets[k]] = static_cast<int>(k);

  SampleMatrix out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)), design};
  const auto& w = scm.weights();
  const auto& order = scm.dag().topological_order();
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t j : order) {
      const auto col = static_cast<Eigen::Index>(j);
      if (target_slot[j] >= 0) {
        out.values(row, col) = design.states[static_cast<std::size_t>(target_slot[j])];
        continue;
      }
      double mean = 0.0;
      for (std::size_t p : scm.dag().parents(j)) mean += w(static_cast<Eigen::Index>(p), col) * out.values(row, static_cast<Eigen::Index>(p));
      out.values(row, col) = mean + std::sqrt(scm.noise_vars()(col)) * rng.normal();
    }
  }
  return out;
}

double log_normal_density(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (r * r / var + std::log(var) + std::log(2.0 * std::numbers::pi));
}

double log_likelihood(const Scm& scm, const Eigen::Ref<const Eigen::VectorXd>& y, const Design& design) {
  const std::size_t d = scm.size();
  if (static_cast<std::size_t>(y.size()) != d) throw std::invalid_argument("outcome length must equal d");
  std::vector<bool> intervened(d, false);
  for (std::size_t t : design.targets) intervened.at(t) = true;
  const auto& w = scm.weights();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (intervened[j]) continue;
    const auto col = static_cast<Eigen::Index>(j);
    double mean = 0.0;
    for (std::size_t p : scm.dag().parents(j)) mean += w(static_cast<Eigen::Index>(p), col) * y(static_cast<Eigen::Index>(p));
    total += log_normal_density(y(col), mean, scm.noise_vars()(col));
  }
  return total;
}

double batch_log_likelihood(const Scm& scm, std::span<const Eigen::VectorXd> outcomes, const DesignBatch& designs) {
  if (outcomes.size() != designs.size()) throw std::invalid_argument("one outcome vector is required per design");
  double total = 0.0;
  for (std::size_t b = 0; b < designs.size(); ++b) total += log_likelihood(scm, outcomes[b], designs[b]);
  return total;
}

}  // namespace cbed
