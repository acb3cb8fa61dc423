#include "cbed/grad_engine.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cbed {

OptimizerState OptimizerState::zeros(const PolicyParams& params, const AdamConfig& config) {
  OptimizerState s;
  const auto r = params.target_logits.rows();
  const auto c = params.target_logits.cols();
  s.m_logits = s.v_logits = s.m_states = s.v_states = Eigen::MatrixXd::Zero(r, c);
  s.config = config;
  return s;
}

namespace {

void adam_update(Eigen::MatrixXd& x, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& g,
                 const AdamConfig& cfg, double lr, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double mhat = m(i) / bc1;
    const double vhat = v(i) / bc2;
    x(i) += lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace

void adam_step(OptimizerState& state, PolicyParams& params, const Eigen::MatrixXd& grad_logits,
               const Eigen::MatrixXd& grad_states) {
  if (grad_logits.rows() != params.target_logits.rows() || grad_logits.cols() != params.target_logits.cols() ||
      grad_states.rows() != params.state_values.rows() || grad_states.cols() != params.state_values.cols() ||
      state.m_logits.rows() != params.target_logits.rows() || state.m_logits.cols() != params.target_logits.cols()) {
    throw std::invalid_argument("gradient and optimizer shapes must match the policy");
  }
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.config.beta1, t);
  const double bc2 = 1.0 - std::pow(state.config.beta2, t);
  const AdamConfig& cfg = state.config;
  adam_update(params.target_logits, state.m_logits, state.v_logits, grad_logits, cfg, cfg.learning_rate, bc1, bc2);
  adam_update(params.state_values, state.m_states, state.v_states, grad_states, cfg,
              cfg.state_learning_rate.value_or(cfg.learning_rate), bc1, bc2);
}

EigEstimate evaluate_with_gradients(const Objective& objective, const PolicyParams& params, const FrozenNoise& noise) {
  const RelaxedDesignSample sample = relax(params, noise.perturbation);
  const DesignGradient g = objective(sample.hard_targets, sample.states, noise.estimator_seed);
  EigEstimate e = to_policy_gradient(g, sample);
  if (!e.grad_target_logits.allFinite() || !e.grad_state_values.allFinite()) {
    e.diagnostics.valid = false;
    e.diagnostics.warnings.emplace_back("non-finite gradient; step aborted");
    e.grad_target_logits.setZero();
    e.grad_state_values.setZero();
  }
  return e;
}

OptimizeResult optimize_policy(const Objective& objective, PolicyParams params, const OptimizeOptions& options,
                               std::uint64_t seed) {
  if (options.steps < 1 || options.samples < 1) throw std::invalid_argument("optimize_policy needs C >= 1 and O >= 1");
  params.validate();
  OptimizerState state = OptimizerState::zeros(params, options.adam);
  const Rng perturbation_root(derive_seed(seed, "perturbation"));
  const std::uint64_t estimator_root = derive_seed(seed, "estimator");
  const std::size_t batch = params.batch_size();
  const std::size_t d = params.dim();

  auto temperature_at = [&](std::size_t step) {
    return options.fixed_temperature ? *options.fixed_temperature
                                     : anneal_temperature(options.schedule, step, options.steps);
  };

  OptimizeResult result;
  for (std::size_t c = 0; c < options.steps; ++c) {
    params.temperature = temperature_at(c);
    const std::uint64_t estimator_seed = derive_seed(estimator_root, c);
    Eigen::MatrixXd g_logits = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(d));
    Eigen::MatrixXd g_states = g_logits;
    double value = 0.0;
    std::optional<double> ess;
    bool aborted = false;
    for (std::size_t o = 0; o < options.samples; ++o) {
      Rng prng = perturbation_root.substream(c * options.samples + o);
      FrozenNoise noise{draw_perturbation(params.mode, batch, d, prng), estimator_seed};
      const EigEstimate e = evaluate_with_gradients(objective, params, noise);
      if (!e.diagnostics.valid) {
        aborted = true;
        break;
      }
      g_logits += e.grad_target_logits;
      g_states += e.grad_state_values;
      value += e.value;
      if (e.diagnostics.ess) ess = e.diagnostics.ess;
    }
    TraceRow row;
    row.step = c;
    row.temperature = params.temperature;
    row.ess = ess;
    row.aborted = aborted;
    if (!aborted) {
      const double inv = 1.0 / static_cast<double>(options.samples);
      g_logits *= inv;
      g_states *= inv;
      row.eig_value = value * inv;
      row.grad_norm = std::sqrt(g_logits.squaredNorm() + g_states.squaredNorm());
      adam_step(state, params, g_logits, g_states);
      clip_states(params, options.state_lo, options.state_hi);
    } else {
      row.eig_value = std::numeric_limits<double>::quiet_NaN();
    }
    result.trace.push_back(row);
  }
  params.temperature = temperature_at(options.steps);
  result.params = std::move(params);
  return result;
}

}  // namespace cbed
