#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cbed/estimators.hpp"
#include "cbed/policy.hpp"

namespace cbed {

struct AdamConfig {
  double learning_rate = 0.1;
  /// Step size for the state values; unset means learning_rate.
  std::optional<double> state_learning_rate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Eigen::MatrixXd m_logits, v_logits;
  Eigen::MatrixXd m_states, v_states;
  std::size_t step_count = 0;
  AdamConfig config;

  static OptimizerState zeros(const PolicyParams& params, const AdamConfig& config);
};

/// One bias-corrected Adam update in the ascent direction.
void adam_step(OptimizerState& state, PolicyParams& params, const Eigen::MatrixXd& grad_logits,
               const Eigen::MatrixXd& grad_states);

/// Everything random in one objective evaluation: the relaxation perturbation and the estimator seed.
struct FrozenNoise {
  Perturbation perturbation;
  std::uint64_t estimator_seed = 0;
};

/// Relaxes params with the frozen perturbation, evaluates the objective at the hard
/// design and chains its gradients to the logits and states. A non-finite
/// gradient marks the estimate invalid (zero gradients, warning recorded).
EigEstimate evaluate_with_gradients(const Objective& objective, const PolicyParams& params, const FrozenNoise& noise);

struct OptimizeOptions {
  std::size_t steps = 100;   // C
  std::size_t samples = 16;  // O
  AdamConfig adam;
  TemperatureSchedule schedule;
  /// When set, the temperature stays at this value instead of being annealed.
  std::optional<double> fixed_temperature;
  double state_lo = -10.0;
  double state_hi = 10.0;
};

struct TraceRow {
  std::size_t step = 0;
  double eig_value = 0.0;
  double temperature = 0.0;
  std::optional<double> ess;
  double grad_norm = 0.0;
  bool aborted = false;
};

struct OptimizeResult {
  PolicyParams params;
  std::vector<TraceRow> trace;
};

/// C ascent steps, each averaging O relaxed samples. Estimator noise is shared by
/// the O samples of a step; each sample has its own perturbation.
OptimizeResult optimize_policy(const Objective& objective, PolicyParams params, const OptimizeOptions& options,
                               std::uint64_t seed);

}  // namespace cbed
