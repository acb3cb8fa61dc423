#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbed/config.hpp"
#include "cbed/grad_engine.hpp"
#include "cbed/metrics.hpp"
#include "cbed/particles.hpp"
#include "cbed/scm.hpp"

namespace cbed {

/// The system under study. Strategies only see what sample() returns; truth()
/// is reserved for metrics.
class Environment {
 public:
  Environment(Scm truth, std::uint64_t seed) : truth_(std::move(truth)), rng_(seed) {}
  virtual ~Environment() = default;

  std::size_t dim() const { return truth_.size(); }
  virtual SampleMatrix sample(const Design& design, std::size_t n) { return cbed::sample(truth_, design, n, rng_); }
  virtual const Scm& truth() const { return truth_; }

 private:
  Scm truth_;
  Rng rng_;
};

/// Ground truth drawn from the environment prior with scm_seed (or a seed derived from `seed`).
Environment make_environment(const RunConfig& config);
Scm make_truth(const RunConfig& config);

/// n outcomes per design, recorded with their designs in batch order.
Dataset execute(Environment& env, const DesignBatch& batch, std::size_t n);

struct MetricsRow {
  std::size_t batch_index = 0;
  double e_shd = 0.0;
  double f1 = 0.0;
  double i_mmd = 0.0;
  double ess = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
};

/// Receives artifacts as they are produced so a run directory stays valid after interruption.
class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void on_trace(std::size_t batch, const std::vector<TraceRow>& rows) = 0;
  virtual void on_designs(std::size_t batch, const DesignBatch& designs) = 0;
  virtual void on_metrics(const MetricsRow& row) = 0;
  virtual void on_particles(const ParticleSet& particles) = 0;
};

struct RunArtifacts {
  std::vector<MetricsRow> metrics;
  std::vector<DesignBatch> designs;
  std::vector<std::vector<TraceRow>> traces;
  ParticleSet final_particles;
  Dataset data;
  std::optional<std::string> failure;
};

/// Acquisition loop driven by config.strategy.
RunArtifacts run_loop(const RunConfig& config, Environment& env, RunSink* sink = nullptr);

/// Same loop with the policy step replaced by random designs.
RunArtifacts run_baseline(const RunConfig& config, Environment& env, Strategy baseline, RunSink* sink = nullptr);

/// Posterior used for metrics: exact enumeration when configured, otherwise a
/// bootstrap ensemble (prior draws while there is no data yet).
ParticleSet evaluation_posterior(const RunConfig& config, const Dataset& data, std::uint64_t seed);

/// Particles the design step works with for the given history (without metrics).
ParticleSet design_particles(const RunConfig& config, const Dataset& data, const ParticleSet* prior_particles,
                             std::uint64_t seed);

/// One policy optimization on `particles` with the configured estimator.
OptimizeResult design_batch(const RunConfig& config, const ParticleSet& particles, std::uint64_t seed);

}  // namespace cbed
