#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "cbed/errors.hpp"
#include "cbed/posterior.hpp"

namespace cbed {

namespace {

constexpr double kRidge = 1e-6;
constexpr double kDegenerateVarFloor = 1e-6;
constexpr double kVarFloor = 1e-12;
constexpr double kImprovementTol = 1e-9;

using Mask = std::uint64_t;

std::vector<std::size_t> mask_members(Mask m) {
  std::vector<std::size_t> out;
  while (m != 0) {
    out.push_back(static_cast<std::size_t>(std::countr_zero(m)));
    m &= m - 1;
  }
  return out;
}

// Sufficient statistics per node: Gram matrix of the records that do not intervene on it.
struct NodeStats {
  Eigen::MatrixXd gram;
  std::size_t n = 0;
};

std::vector<NodeStats> node_statistics(const Dataset& data) {
  const std::size_t d = data.dim();
  const auto dd = static_cast<Eigen::Index>(d);
  std::vector<NodeStats> stats(d, NodeStats{Eigen::MatrixXd::Zero(dd, dd), 0});
  // Group records by target set so each distinct regime contributes one outer product sum.
  std::map<std::vector<std::size_t>, Eigen::MatrixXd> by_regime;
  std::map<std::vector<std::size_t>, std::size_t> counts;
  for (const auto& r : data.records()) {
    auto [it, inserted] = by_regime.try_emplace(r.design.targets, Eigen::MatrixXd::Zero(dd, dd));
    it->second.selfadjointView<Eigen::Lower>().rankUpdate(r.y);
    ++counts[r.design.targets];
  }
  for (auto& [targets, g] : by_regime) {
    const Eigen::MatrixXd full = g.selfadjointView<Eigen::Lower>();
    for (std::size_t j = 0; j < d; ++j) {
      if (std::binary_search(targets.begin(), targets.end(), j)) continue;
      stats[j].gram += full;
      stats[j].n += counts[targets];
    }
  }
  return stats;
}

struct LocalFit {
  Eigen::VectorXd beta;
  double variance = 1.0;
  double score = 0.0;
};

LocalFit fit_local(const NodeStats& s, std::size_t j, const std::vector<std::size_t>& parents) {
  LocalFit fit;
  const auto k = static_cast<Eigen::Index>(parents.size());
  fit.beta = Eigen::VectorXd::Zero(k);
  if (s.n == 0) return fit;
  const auto jj = static_cast<Eigen::Index>(j);
  const double n = static_cast<double>(s.n);
  const bool degenerate = s.n <= parents.size();
  double rss = s.gram(jj, jj);
  if (k > 0) {
    Eigen::MatrixXd xtx(k, k);
    Eigen::VectorXd xty(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto pa = static_cast<Eigen::Index>(parents[static_cast<std::size_t>(a)]);
      xty(a) = s.gram(pa, jj);
      for (Eigen::Index b = 0; b < k; ++b) xtx(a, b) = s.gram(pa, static_cast<Eigen::Index>(parents[static_cast<std::size_t>(b)]));
    }
    if (degenerate) xtx.diagonal().array() += kRidge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      xtx.diagonal().array() += kRidge;
      ldlt.compute(xtx);
    }
    fit.beta = ldlt.solve(xty);
    rss = s.gram(jj, jj) - 2.0 * fit.beta.dot(xty) + fit.beta.dot(xtx * fit.beta);
  }
  rss = std::max(rss, 0.0);
  fit.variance = std::max(rss / n, degenerate ? kDegenerateVarFloor : kVarFloor);
  const double loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * fit.variance) + 1.0);
  fit.score = loglik - 0.5 * static_cast<double>(k + 1) * std::log(n);
  return fit;
}

class ScoreCache {
 public:
  explicit ScoreCache(const Dataset& data) : stats_(node_statistics(data)), cache_(data.dim()) {}

  double score(std::size_t j, Mask parents) {
    auto& table = cache_[j];
    if (auto it = table.find(parents); it != table.end()) return it->second;
    const double s = fit_local(stats_[j], j, mask_members(parents)).score;
    table.emplace(parents, s);
    return s;
  }

 private:
  std::vector<NodeStats> stats_;
  std::vector<std::unordered_map<Mask, double>> cache_;
};

// Parent masks; parents[j] bit i set means i -> j.
struct Graph {
  std::vector<Mask> parents;

  bool reaches(std::size_t from, std::size_t to) const {
    // DFS along child edges.
    const std::size_t d = parents.size();
    Mask visited = 0;
    std::vector<std::size_t> stack{from};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      if (v == to) return true;
      for (std::size_t c = 0; c < d; ++c) {
        if ((parents[c] >> v & 1U) && !(visited >> c & 1U)) {
          visited |= Mask{1} << c;
          stack.push_back(c);
        }
      }
    }
    return false;
  }

  Dag to_dag() const {
    std::vector<Edge> edges;
    for (std::size_t j = 0; j < parents.size(); ++j) {
      for (std::size_t i : mask_members(parents[j])) edges.emplace_back(i, j);
    }
    return Dag(parents.size(), std::move(edges));
  }
};

double total_score(ScoreCache& cache, const Graph& g) {
  double s = 0.0;
  for (std::size_t j = 0; j < g.parents.size(); ++j) s += cache.score(j, g.parents[j]);
  return s;
}

Graph hill_climb(ScoreCache& cache, Graph g, std::size_t max_parents) {
  const std::size_t d = g.parents.size();
  std::vector<double> node_score(d);
  for (std::size_t j = 0; j < d; ++j) node_score[j] = cache.score(j, g.parents[j]);

  for (;;) {
    double best_delta = kImprovementTol;
    int best_kind = -1;  // 0 add, 1 delete, 2 reverse
    std::size_t best_i = 0;
    std::size_t best_j = 0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        if (i == j) continue;
        const Mask bit_i = Mask{1} << i;
        const Mask bit_j = Mask{1} << j;
        if (g.parents[j] & bit_i) {
          // delete i -> j
          const double del = cache.score(j, g.parents[j] & ~bit_i) - node_score[j];
          if (del > best_delta) {
            best_delta = del;
            best_kind = 1;
            best_i = i;
            best_j = j;
          }
          // reverse to j -> i
          if (static_cast<std::size_t>(std::popcount(g.parents[i])) < max_parents) {
            Graph trial = g;
            trial.parents[j] &= ~bit_i;
            if (!trial.reaches(i, j)) {
              const double rev = cache.score(j, trial.parents[j]) - node_score[j] +
                                 cache.score(i, g.parents[i] | bit_j) - node_score[i];
              if (rev > best_delta) {
                best_delta = rev;
                best_kind = 2;
                best_i = i;
                best_j = j;
              }
            }
          }
        } else if (!(g.parents[i] & bit_j)) {
          // add i -> j
          if (static_cast<std::size_t>(std::popcount(g.parents[j])) >= max_parents) continue;
          const double add = cache.score(j, g.parents[j] | bit_i) - node_score[j];
          if (add > best_delta && !g.reaches(j, i)) {
            best_delta = add;
            best_kind = 0;
            best_i = i;
            best_j = j;
          }
        }
      }
    }
    if (best_kind < 0) break;
    const Mask bit_i = Mask{1} << best_i;
    const Mask bit_j = Mask{1} << best_j;
    if (best_kind == 0) {
      g.parents[best_j] |= bit_i;
    } else if (best_kind == 1) {
      g.parents[best_j] &= ~bit_i;
    } else {
      g.parents[best_j] &= ~bit_i;
      g.parents[best_i] |= bit_j;
      node_score[best_i] = cache.score(best_i, g.parents[best_i]);
    }
    node_score[best_j] = cache.score(best_j, g.parents[best_j]);
  }
  return g;
}

Graph random_graph(std::size_t d, double p, std::size_t max_parents, Rng& rng) {
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());
  Graph g{std::vector<Mask>(d, 0)};
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      const std::size_t child = order[b];
      if (rng.bernoulli(p) && static_cast<std::size_t>(std::popcount(g.parents[child])) < max_parents) {
        g.parents[child] |= Mask{1} << order[a];
      }
    }
  }
  return g;
}

}  // namespace

double bic_score(const Dataset& data, const Dag& dag) {
  ScoreCache cache(data);
  double s = 0.0;
  for (std::size_t j = 0; j < dag.size(); ++j) {
    Mask m = 0;
    for (std::size_t p : dag.parents(j)) m |= Mask{1} << p;
    s += cache.score(j, m);
  }
  return s;
}

Dag learn_structure(const Dataset& data, const LearnerOptions& options, Rng& rng) {
  const std::size_t d = data.dim();
  if (d > 64) throw CapabilityError("structure learning supports d <= 64");
  ScoreCache cache(data);
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
  Graph best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Graph start = r == 0 ? Graph{std::vector<Mask>(d, 0)} : random_graph(d, options.restart_edge_prob, options.max_parents, rng);
    Graph result = hill_climb(cache, std::move(start), options.max_parents);
    const double s = total_score(cache, result);
    if (s > best_score) {
      best_score = s;
      best = std::move(result);
    }
  }
  return best.to_dag();
}

Scm fit_parameters(const Dataset& data, const Dag& dag) {
  const std::size_t d = dag.size();
  if (data.dim() != d) throw std::invalid_argument("dataset and graph dimensions differ");
  const auto stats = node_statistics(data);
  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dd, dd);
  Eigen::VectorXd noise(dd);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& parents = dag.parents(j);
    const LocalFit fit = fit_local(stats[j], j, parents);
    for (std::size_t a = 0; a < parents.size(); ++a) {
      w(static_cast<Eigen::Index>(parents[a]), static_cast<Eigen::Index>(j)) = fit.beta(static_cast<Eigen::Index>(a));
    }
    noise(static_cast<Eigen::Index>(j)) = fit.variance;
  }
  return Scm(dag, std::move(w), std::move(noise));
}

Dataset stratified_resample(const Dataset& data, Rng& rng) {
  std::vector<std::vector<std::size_t>> keys;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data[i].design.targets;
    auto it = std::find(keys.begin(), keys.end(), t);
    if (it == keys.end()) {
      keys.push_back(t);
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - keys.begin())].push_back(i);
    }
  }
  Dataset out(data.dim());
  for (const auto& g : groups) {
    for (std::size_t k = 0; k < g.size(); ++k) out.add(data[g[rng.index(g.size())]]);
  }
  return out;
}

ParticleSet bootstrap_posterior(const Dataset& data, const BootstrapOptions& options, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("bootstrap posterior needs at least one record");
  if (options.replicates < 1) throw std::invalid_argument("bootstrap needs at least one replicate");
  std::vector<Scm> particles;
  particles.reserve(options.replicates);
  for (std::size_t k = 0; k < options.replicates; ++k) {
    Rng sub = rng.substream(k);
    Dataset resampled = stratified_resample(data, sub);
    Dag dag = learn_structure(resampled, options.learner, sub);
    particles.push_back(fit_parameters(resampled, dag));
  }
  return ParticleSet::uniform(std::move(particles));
}

}  // namespace cbed
