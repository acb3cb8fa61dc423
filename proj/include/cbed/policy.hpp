#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "cbed/rng.hpp"
#include "cbed/scm.hpp"

namespace cbed {

enum class PolicyMode { Single, MultiUnconstrained, MultiConstrained };

std::string to_string(PolicyMode mode);
/// Accepts "single", "multi_unconstrained", "multi_constrained"; throws ConfigError otherwise.
PolicyMode parse_policy_mode(std::string_view name);

/// Design policy parameters: target logits and deterministic state values, both B x d.
struct PolicyParams {
  Eigen::MatrixXd target_logits;
  Eigen::MatrixXd state_values;
  PolicyMode mode = PolicyMode::Single;
  std::size_t k = 1;  // only used by MultiConstrained
  double temperature = 1.0;

  std::size_t batch_size() const { return static_cast<std::size_t>(target_logits.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(target_logits.cols()); }
  void validate() const;

  /// Zero logits; states drawn uniformly from [state_lo, state_hi].
  static PolicyParams initial(PolicyMode mode, std::size_t k, std::size_t batch, std::size_t d, double temperature,
                              double state_lo, double state_hi, Rng& rng);
};

/// Gumbel (single / constrained) or logistic (unconstrained) perturbations, B x d.
struct Perturbation {
  Eigen::MatrixXd noise;
};

Perturbation draw_perturbation(PolicyMode mode, std::size_t batch, std::size_t d, Rng& rng);

struct RelaxedDesignSample {
  Eigen::MatrixXd soft_targets;   // relaxed I, used for gradients
  Eigen::MatrixXd hard_targets;   // straight-through forward value
  Eigen::MatrixXd states;
  Eigen::MatrixXd masked_states;  // hard_targets .* states
  // Inputs kept so the sample can be differentiated back to its logits.
  Eigen::MatrixXd logits;
  Perturbation perturbation;
  PolicyMode mode = PolicyMode::Single;
  std::size_t k = 1;
  double temperature = 1.0;
};

/// Deterministic relaxation given frozen perturbations.
RelaxedDesignSample relax(const PolicyParams& params, const Perturbation& perturbation);

RelaxedDesignSample sample_relaxed(const PolicyParams& params, Rng& rng);

/// Soft targets for arbitrary logits with the sample's frozen perturbations and temperature.
Eigen::MatrixXd soft_targets_at(const RelaxedDesignSample& sample, const Eigen::MatrixXd& logits);

/// Vector-Jacobian product: gradient w.r.t. logits given a gradient w.r.t. soft targets.
Eigen::MatrixXd soft_targets_vjp(const RelaxedDesignSample& sample, const Eigen::MatrixXd& grad_soft);

/// Rows of hard targets become designs; states come from the state values.
/// Throws std::logic_error on an empty row in single/constrained mode.
DesignBatch to_design_batch(const RelaxedDesignSample& sample);

struct TemperatureSchedule {
  double start = 5.0;
  double end = 0.5;
};

/// Geometric interpolation start * (end / start)^(step / total).
double anneal_temperature(const TemperatureSchedule& schedule, std::size_t step, std::size_t total);

struct StateRule {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  double value = 0.0;
  double lo = -10.0;
  double hi = 10.0;

  static StateRule fixed(double v) { return {Kind::Fixed, v, 0.0, 0.0}; }
  static StateRule uniform(double lo, double hi) { return {Kind::Uniform, 0.0, lo, hi}; }
};

/// Random designs: one uniform target (single), each node with probability 1/2
/// (unconstrained), or a uniform k-subset (constrained).
DesignBatch random_baseline(PolicyMode mode, std::size_t k, const StateRule& rule, std::size_t batch, std::size_t d,
                            Rng& rng);

void clip_states(PolicyParams& params, double lo, double hi);

}  // namespace cbed
