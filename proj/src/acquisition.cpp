#include "cbed/acquisition.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "cbed/errors.hpp"
#include "cbed/estimators.hpp"
#include "cbed/posterior.hpp"
#include "cbed/priors.hpp"

namespace cbed {

Scm make_truth(const RunConfig& config) {
  Rng rng(config.scm_seed ? *config.scm_seed : derive_seed(config.seed, "scm"));
  return sample_scm(config.environment_prior, rng);
}

Environment make_environment(const RunConfig& config) {
  return Environment(make_truth(config), derive_seed(config.seed, "environment"));
}

Dataset execute(Environment& env, const DesignBatch& batch, std::size_t n) {
  Dataset out(env.dim());
  for (const auto& design : batch) {
    design.validate(env.dim());
    out.append(env.sample(design, n));
  }
  return out;
}

ParticleSet evaluation_posterior(const RunConfig& config, const Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  if (config.posterior == PosteriorKind::Exact) {
    ExactPosteriorOptions opts;
    opts.particles_per_graph = config.particles_per_graph;
    return exact_posterior(data, config.particle_prior, opts, rng);
  }
  if (data.empty()) return sample_particles(config.particle_prior, std::max<std::size_t>(config.bootstrap_replicates, 2), rng);
  BootstrapOptions opts;
  opts.replicates = config.bootstrap_replicates;
  opts.learner.restarts = config.learner_restarts;
  return bootstrap_posterior(data, opts, rng);
}

namespace {

// Gives a fitted set the history offsets the importance-weighted estimator needs.
ParticleSet with_history(const RunConfig& config, ParticleSet set, const Dataset& data) {
  if (set.log_hist_lik) return set;
  if (config.posterior == PosteriorKind::Exact && !config.particles_file) {
    // Weights already hold prior x likelihood; their logs serve as offsets up to a constant.
    std::vector<double> offsets(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) offsets[i] = std::log(set.weights[i]);
    set.log_hist_lik = std::move(offsets);
    return set;
  }
  return attach_history(std::move(set), data);
}

ParticleSet design_set(const RunConfig& config, const Dataset& data, const ParticleSet* prior,
                       const ParticleSet* external, const ParticleSet& fitted) {
  ParticleSet set;
  if (external) set = *external;
  else if (config.posterior == PosteriorKind::None) set = attach_history(*prior, data);
  else set = fitted;
  if (config.estimator == EstimatorKind::Iwnmc) set = with_history(config, std::move(set), data);
  return set;
}

MetricsRow failure_row(std::size_t t, std::uint64_t seed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return MetricsRow{t, nan, nan, nan, nan, seed, true};
}

RunArtifacts run_impl(const RunConfig& config, Environment& env, Strategy strategy, RunSink* sink) {
  config.validate();
  if (env.dim() != config.d) throw ConfigError("environment dimension differs from d");
  const std::size_t d = config.d;
  const std::uint64_t posterior_root = derive_seed(config.seed, "posterior");
  const std::uint64_t policy_root = derive_seed(config.seed, "policy");
  const std::uint64_t eval_root = derive_seed(config.seed, "eval");
  const std::uint64_t baseline_root = derive_seed(config.seed, "baseline");

  RunArtifacts art;
  art.data = Dataset(d);

  std::optional<ParticleSet> external;
  if (config.particles_file) external = particles_from_json(read_json_file(*config.particles_file));
  std::optional<ParticleSet> prior;
  const bool uses_policy = strategy == Strategy::Policy;
  if (uses_policy && config.posterior == PosteriorKind::None && !external) {
    Rng rng(derive_seed(config.seed, "prior"));
    prior = sample_particles(config.particle_prior, config.L, rng);
  }

  IMmdOptions immd;
  immd.designs = config.immd_designs;
  immd.n_per_design = config.immd_samples;
  immd.state_lo = config.state_lo;
  immd.state_hi = config.state_hi;

  ParticleSet fitted;
  for (std::size_t t = 0; t <= config.T; ++t) {
    try {
      if (t == 0) {
        if (config.N > 0) art.data.append(env.sample(Design::observational(), config.N));
      } else {
        DesignBatch batch;
        if (uses_policy) {
          const ParticleSet particles =
              design_set(config, art.data, prior ? &*prior : nullptr, external ? &*external : nullptr, fitted);
          const std::uint64_t seed = derive_seed(policy_root, t);
          OptimizeResult result = design_batch(config, particles, seed);
          Rng final_rng(derive_seed(seed, "final"));
          batch = to_design_batch(sample_relaxed(result.params, final_rng));
          art.traces.push_back(result.trace);
          if (sink) sink->on_trace(t, result.trace);
        } else {
          const StateRule rule = strategy == Strategy::RandomFixed ? StateRule::fixed(config.random_fixed_value())
                                                                   : StateRule::uniform(config.state_lo, config.state_hi);
          Rng rng(derive_seed(baseline_root, t));
          batch = random_baseline(config.mode, config.k, rule, config.B, d, rng);
        }
        art.data.append(execute(env, batch, config.n_per_batch_execution));
        art.designs.push_back(batch);
        if (sink) sink->on_designs(t, batch);
      }

      fitted = evaluation_posterior(config, art.data, derive_seed(posterior_root, t));
      double ess = effective_sample_size(fitted);
      if (uses_policy) {
        ess = effective_sample_size(
            design_set(config, art.data, prior ? &*prior : nullptr, external ? &*external : nullptr, fitted));
      }
      Rng eval_rng(derive_seed(eval_root, t));
      const MetricReport report = evaluate_metrics(fitted, env.truth(), immd, eval_rng);
      MetricsRow row{t, report.e_shd, report.f1, report.i_mmd, ess, config.seed, false};
      art.metrics.push_back(row);
      art.final_particles = fitted;
      if (sink) {
        sink->on_metrics(row);
        sink->on_particles(fitted);
      }
    } catch (const std::exception& e) {
      art.failure = "batch " + std::to_string(t) + ": " + e.what();
      const MetricsRow row = failure_row(t, config.seed);
      art.metrics.push_back(row);
      if (sink) sink->on_metrics(row);
      break;
    }
  }
  return art;
}

}  // namespace

ParticleSet design_particles(const RunConfig& config, const Dataset& data, const ParticleSet* prior_particles,
                             std::uint64_t seed) {
  std::optional<ParticleSet> external;
  if (config.particles_file) external = particles_from_json(read_json_file(*config.particles_file));
  ParticleSet fitted;
  if (!external && config.posterior != PosteriorKind::None) fitted = evaluation_posterior(config, data, seed);
  std::optional<ParticleSet> prior;
  if (!external && config.posterior == PosteriorKind::None && !prior_particles) {
    Rng rng(derive_seed(seed, "prior"));
    prior = sample_particles(config.particle_prior, config.L, rng);
    prior_particles = &*prior;
  }
  return design_set(config, data, prior_particles, external ? &*external : nullptr, fitted);
}

OptimizeResult design_batch(const RunConfig& config, const ParticleSet& particles, std::uint64_t seed) {
  Rng init(derive_seed(seed, "init"));
  const double tau0 = config.temperature_fixed ? *config.temperature_fixed : config.temperature_start;
  PolicyParams params =
      PolicyParams::initial(config.mode, config.k, config.B, config.d, tau0, config.state_lo, config.state_hi, init);
  auto estimator = std::make_shared<const ContrastiveEstimator>(particles);
  Objective objective;
  if (config.estimator == EstimatorKind::Nmc) {
    objective = make_nmc_objective(estimator, NmcOptions{config.n_outer, config.L, false});
  } else {
    IwnmcOptions opts;
    opts.ess_floor = config.ess_floor;
    objective = make_iwnmc_objective(estimator, opts);
  }
  OptimizeOptions opts;
  opts.steps = config.C;
  opts.samples = config.O;
  opts.adam.learning_rate = config.learning_rate;
  opts.adam.state_learning_rate = config.state_learning_rate;
  opts.schedule = TemperatureSchedule{config.temperature_start, config.temperature_end};
  opts.fixed_temperature = config.temperature_fixed;
  opts.state_lo = config.state_lo;
  opts.state_hi = config.state_hi;
  return optimize_policy(objective, std::move(params), opts, derive_seed(seed, "optimize"));
}

RunArtifacts run_loop(const RunConfig& config, Environment& env, RunSink* sink) {
  return run_impl(config, env, config.strategy, sink);
}

RunArtifacts run_baseline(const RunConfig& config, Environment& env, Strategy baseline, RunSink* sink) {
  if (baseline == Strategy::Policy) throw ConfigError("run_baseline needs a random strategy");
  return run_impl(config, env, baseline, sink);
}

}  // namespace cbed
