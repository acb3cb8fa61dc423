#include "cbed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cbed {

std::size_t shd(const Dag& a, const Dag& b) {
  if (a.size() != b.size()) throw std::invalid_argument("shd needs graphs of equal size");
  const std::size_t d = a.size();
  std::size_t count = 0;
  // Per unordered pair the state is none, i->j or j->i; any mismatch is one operation.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const int sa = a.has_edge(i, j) ? 1 : (a.has_edge(j, i) ? 2 : 0);
      const int sb = b.has_edge(i, j) ? 1 : (b.has_edge(j, i) ? 2 : 0);
      if (sa != sb) ++count;
    }
  }
  return count;
}

double expected_shd(const ParticleSet& particles, const Dag& truth) {
  if (particles.size() == 0) throw std::invalid_argument("expected_shd needs particles");
  double total = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    total += particles.weights[i] * static_cast<double>(shd(particles.particles[i].dag(), truth));
  }
  return total;
}

double edge_f1(const Dag& predicted, const Dag& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("edge_f1 needs graphs of equal size");
  std::size_t tp = 0;
  for (const auto& [i, j] : predicted.edges()) tp += truth.has_edge(i, j) ? 1 : 0;
  const std::size_t fp = predicted.edge_count() - tp;
  const std::size_t fn = truth.edge_count() - tp;
  if (tp == 0) return (predicted.edge_count() == 0 && truth.edge_count() == 0) ? 1.0 : 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double expected_edge_f1(const ParticleSet& particles, const Dag& truth) {
  if (particles.size() == 0) throw std::invalid_argument("expected_edge_f1 needs particles");
  double total = 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    total += particles.weights[i] * edge_f1(particles.particles[i].dag(), truth);
  }
  return total;
}

MmdResult mmd_squared_detail(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("mmd needs nonempty samples");
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd needs samples of equal dimension");
  const Eigen::Index nx = x.rows();
  const Eigen::Index n = nx + y.rows();
  Eigen::MatrixXd pooled(n, x.cols());
  pooled << x, y;

  Eigen::MatrixXd sq(n, n);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    sq(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = (pooled.row(i) - pooled.row(j)).squaredNorm();
      sq(i, j) = sq(j, i) = s;
      if (s > 0.0) dists.push_back(std::sqrt(s));
    }
  }
  MmdResult r;
  if (dists.empty()) {
    r.bandwidth = 1.0;
    r.bandwidth_fallback = true;
  } else {
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
    double median = dists[mid];
    if (dists.size() % 2 == 0) {
      median = 0.5 * (median + *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    r.bandwidth = median;
  }
  const double scale = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double k = std::exp(-sq(i, j) * scale);
      const bool xi = i < nx, xj = j < nx;
      if (xi && xj) kxx += k;
      else if (!xi && !xj) kyy += k;
      else if (xi) kxy += k;
    }
  }
  const auto mx = static_cast<double>(nx);
  const auto my = static_cast<double>(n - nx);
  r.value = std::max(0.0, kxx / (mx * mx) + kyy / (my * my) - 2.0 * kxy / (mx * my));
  // Identical samples give exactly zero.
  if (x.rows() == y.rows() && x == y) r.value = 0.0;
  return r;
}

double mmd_squared(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) { return mmd_squared_detail(x, y).value; }

double i_mmd(const ParticleSet& particles, const Scm& truth, const IMmdOptions& options, Rng& rng) {
  if (options.n_per_design < 2) throw std::invalid_argument("i_mmd needs at least two samples per design");
  if (options.designs < 1) throw std::invalid_argument("i_mmd needs at least one design");
  const std::size_t d = truth.size();
  double total = 0.0;
  for (std::size_t k = 0; k < options.designs; ++k) {
    const Design design = make_design({{rng.index(d), rng.uniform(options.state_lo, options.state_hi)}});
    Rng truth_rng = rng.substream(2 * k);
    const Eigen::MatrixXd reference = sample(truth, design, options.n_per_design, truth_rng).values;
    double per_design = 0.0;
    for (std::size_t p = 0; p < particles.size(); ++p) {
      if (particles.weights[p] == 0.0) continue;
      Rng prng = rng.substream(derive_seed(2 * k + 1, p));
      const Eigen::MatrixXd model = sample(particles.particles[p], design, options.n_per_design, prng).values;
      per_design += particles.weights[p] * std::sqrt(mmd_squared(model, reference));
    }
    total += per_design;
  }
  return total / static_cast<double>(options.designs);
}

MetricReport evaluate_metrics(const ParticleSet& particles, const Scm& truth, const IMmdOptions& options, Rng& rng) {
  MetricReport r;
  for (const auto& p : particles.particles) {
    r.shd_per_particle.push_back(static_cast<double>(shd(p.dag(), truth.dag())));
    r.f1_per_particle.push_back(edge_f1(p.dag(), truth.dag()));
  }
  r.e_shd = expected_shd(particles, truth.dag());
  r.f1 = expected_edge_f1(particles, truth.dag());
  r.i_mmd = i_mmd(particles, truth, options, rng);
  return r;
}

}  // namespace cbed
