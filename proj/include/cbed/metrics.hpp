#pragma once

#include <cstddef>
#include <vector>

#include "cbed/particles.hpp"
#include "cbed/rng.hpp"
#include "cbed/scm.hpp"

namespace cbed {

/// Edge insertions, deletions and reversals turning a into b; a reversal counts once.
std::size_t shd(const Dag& a, const Dag& b);

double expected_shd(const ParticleSet& particles, const Dag& truth);

/// F1 of directed-edge presence over ordered pairs; an empty prediction of an empty truth scores 1.
double edge_f1(const Dag& predicted, const Dag& truth);
double expected_edge_f1(const ParticleSet& particles, const Dag& truth);

struct MmdResult {
  double value = 0.0;
  double bandwidth = 1.0;
  bool bandwidth_fallback = false;
};

/// Biased (V-statistic) squared MMD with a Gaussian kernel whose bandwidth is the
/// median nonzero pairwise distance of the pooled sample (1.0 if all are zero).
MmdResult mmd_squared_detail(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);
double mmd_squared(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct IMmdOptions {
  std::size_t designs = 10;
  std::size_t n_per_design = 100;
  double state_lo = -10.0;
  double state_hi = 10.0;
};

/// Weighted mean over particles, averaged over random single-target designs, of
/// sqrt(MMD^2) between particle and truth interventional samples.
double i_mmd(const ParticleSet& particles, const Scm& truth, const IMmdOptions& options, Rng& rng);

struct MetricReport {
  double e_shd = 0.0;
  double f1 = 0.0;
  double i_mmd = 0.0;
  std::vector<double> shd_per_particle;
  std::vector<double> f1_per_particle;
};

MetricReport evaluate_metrics(const ParticleSet& particles, const Scm& truth, const IMmdOptions& options, Rng& rng);

}  // namespace cbed
