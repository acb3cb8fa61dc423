#pragma once

#include <cstddef>
#include <optional>

#include "cbed/particles.hpp"
#include "cbed/rng.hpp"
#include "cbed/scm.hpp"

namespace cbed {

/// How noise variances are produced for a sampled SCM.
struct NoiseRule {
  enum class Kind { Fixed, SquaredNormal };
  Kind kind = Kind::Fixed;
  double value = 1.0;   // Fixed: the variance used for every node
  double floor = 1e-2;  // SquaredNormal: max(x^2, floor), x ~ N(0, 1)
};

/// Random linear-Gaussian SCM family: uniform node order, independent
/// order-respecting edges, Gaussian edge weights.
struct PriorSpec {
  std::size_t d = 0;
  std::optional<double> edge_prob;
  std::optional<double> expected_edges_per_vertex;
  double weight_mean = 0.0;
  double weight_var = 1.0;
  NoiseRule noise;

  /// Per-pair edge probability; throws ConfigError when outside [0, 1] or when
  /// neither/both edge rates are set.
  double pair_probability() const;
  void validate() const;

  /// Prior over particles: edge probability 0.25, N(0, 1) weights, squared-normal noise.
  static PriorSpec particle_default(std::size_t d);
  /// Ground-truth environments: one expected edge per vertex, N(0, 1) weights, unit noise.
  static PriorSpec environment_default(std::size_t d);
};

Dag sample_dag(const PriorSpec& spec, Rng& rng);
Scm sample_parameters(const Dag& dag, const PriorSpec& spec, Rng& rng);
Scm sample_scm(const PriorSpec& spec, Rng& rng);

/// L independent prior draws, particle i from substream i of `rng`; uniform weights, no history.
ParticleSet sample_particles(const PriorSpec& spec, std::size_t count, Rng& rng);

}  // namespace cbed
