#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbed/particles.hpp"
#include "cbed/policy.hpp"
#include "cbed/rng.hpp"

namespace cbed {

struct EigDiagnostics {
  std::optional<double> ess;
  std::size_t n_outer = 0;
  std::size_t L = 0;
  bool valid = true;
  std::vector<std::string> warnings;
};

/// Objective value and its gradient with respect to the target mask and the states.
struct DesignGradient {
  double value = 0.0;
  Eigen::MatrixXd grad_mask;
  Eigen::MatrixXd grad_states;
  std::vector<double> terms;  // per outer draw, before weighting
  EigDiagnostics diagnostics;
};

struct EigEstimate {
  double value = 0.0;
  Eigen::MatrixXd grad_target_logits;
  Eigen::MatrixXd grad_state_values;
  EigDiagnostics diagnostics;
};

struct NmcOptions {
  std::size_t n_outer = 30;
  std::size_t L = 30;
  /// Diagnostic mode: the outer particle joins its own contrastive set (L + 1 terms).
  bool include_outer_in_contrast = false;
  /// Contrast against the whole weighted set (the L -> infinity limit); L is then ignored.
  bool full_contrast = false;
};

struct IwnmcOptions {
  double ess_floor = 2.0;
};

/// Nested Monte Carlo estimators over a fixed particle set.
///
/// A design enters as a B x d target mask and a B x d state matrix. Outcomes
/// are simulated by reparameterized ancestral sampling,
///   y_j = m_j s_j + (1 - m_j) (sum_i w_ij y_i + sigma_j eps_j),
/// and each likelihood factor of node j is weighted by (1 - m_j). With a 0/1
/// mask both reduce exactly to the interventional model; fractional masks only
/// arise when differentiating through relaxed targets.
///
/// All random quantities (outer draws, contrastive draws, eps) come from the
/// `noise_seed` argument, so repeated calls with the same seed form common
/// random numbers across designs.
class ContrastiveEstimator {
 public:
  explicit ContrastiveEstimator(ParticleSet particles);

  const ParticleSet& particles() const { return particles_; }

  /// Outer theta_0 and L contrastive particles resampled from the weights, per outer draw:
  ///   mean_n [ log p(y | theta_0) - log (1/L) sum_l p(y | theta_l) ].
  DesignGradient nmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states, const NmcOptions& options,
                     std::uint64_t noise_seed, bool with_gradient = true) const;

  /// Importance-weighted leave-one-out estimator over the particle set, weights
  /// omega = particle weights and contrastive terms scaled by p(h | theta_l).
  /// Requires log_hist_lik.
  DesignGradient iwnmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states, const IwnmcOptions& options,
                       std::uint64_t noise_seed, bool with_gradient = true) const;

  /// Leave-one-out NMC: every particle is an outer draw (weight 1/L), all others contrast.
  DesignGradient loo_nmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states, std::uint64_t noise_seed,
                         bool with_gradient = true) const;

 private:
  struct Compiled;
  struct Plan;
  struct Arrays;
  DesignGradient run(const Plan& plan, const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                     bool with_gradient) const;
  void run_lists(const Plan& plan, Arrays& arr, bool with_gradient, DesignGradient& out) const;
  void run_all(const Plan& plan, Arrays& arr, bool with_gradient, DesignGradient& out) const;

  ParticleSet particles_;
  std::shared_ptr<const Compiled> compiled_;
};

/// Objective over (mask, states) with its gradients; the seed freezes all estimator noise.
using Objective =
    std::function<DesignGradient(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states, std::uint64_t noise_seed)>;

Objective make_nmc_objective(std::shared_ptr<const ContrastiveEstimator> estimator, NmcOptions options);
Objective make_iwnmc_objective(std::shared_ptr<const ContrastiveEstimator> estimator, IwnmcOptions options);

/// NMC at a relaxed sample: forward at the hard targets, gradients through the soft targets.
EigEstimate nmc(const ParticleSet& posterior, const RelaxedDesignSample& sample, std::size_t n_outer, std::size_t L,
                Rng& rng);
EigEstimate iwnmc(const ParticleSet& prior_particles, const RelaxedDesignSample& sample, Rng& rng,
                  const IwnmcOptions& options = {});

/// Chains an objective gradient through the straight-through relaxation.
EigEstimate to_policy_gradient(const DesignGradient& g, const RelaxedDesignSample& sample);

// ---- landscapes ---------------------------------------------------------------

/// One target set per design in the batch.
using TargetSpec = std::vector<std::vector<std::size_t>>;

struct GridCell {
  std::size_t spec_index = 0;
  std::vector<double> states;  // one state per design, shared by that design's targets
  double eig = 0.0;
};

/// Builds the B x d mask and state matrices for a fixed target spec and per-design states.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> design_matrices(const TargetSpec& spec, const std::vector<double>& states,
                                                            std::size_t d);

/// NMC value (no gradients) at every target spec and every point of state_grid^B,
/// all cells sharing the same estimator noise.
std::vector<GridCell> eig_grid(const ParticleSet& posterior, const std::vector<TargetSpec>& specs,
                               const std::vector<double>& state_grid, const NmcOptions& options,
                               std::uint64_t noise_seed);

/// "0|1" style label: designs separated by '|', targets within a design by '+', "obs" if empty.
std::string format_target_spec(const TargetSpec& spec);

/// CSV with header target_spec,state_1..state_B,eig_nats.
void write_grid_csv(std::ostream& out, const std::vector<TargetSpec>& specs, const std::vector<GridCell>& cells);

/// Pairwise summation (deterministic, order-fixed).
double pairwise_sum(const double* values, std::size_t n);

}  // namespace cbed
