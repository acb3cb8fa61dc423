#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbed/policy.hpp"
#include "cbed/priors.hpp"
#include "cbed/serialization.hpp"

namespace cbed {

enum class EstimatorKind { Nmc, Iwnmc };
enum class PosteriorKind { Exact, Bootstrap, None };
enum class Strategy { Policy, RandomFixed, RandomRandom };

std::string to_string(EstimatorKind k);
std::string to_string(PosteriorKind k);
std::string to_string(Strategy s);
/// "policy", "random_fixed" or "random_random"; ConfigError otherwise.
Strategy parse_strategy(const std::string& name);

struct GridConfig {
  double lo = -20.0;
  double hi = 20.0;
  std::size_t points = 41;
  /// Target specs such as "0|1"; empty means every single-target combination.
  std::vector<std::string> specs;
};

struct SampleCommandConfig {
  std::size_t n = 100;
  std::vector<Design> interventions;
};

/// Every knob of a run. Defaults follow the single-target NMC setting.
struct RunConfig {
  std::size_t d = 5;
  std::size_t B = 5;
  std::size_t T = 10;
  std::size_t N = 60;
  std::size_t n_per_batch_execution = 1;

  Strategy strategy = Strategy::Policy;
  EstimatorKind estimator = EstimatorKind::Nmc;
  PosteriorKind posterior = PosteriorKind::Bootstrap;
  PolicyMode mode = PolicyMode::Single;
  std::size_t k = 1;

  std::size_t L = 30;
  std::size_t n_outer = 30;
  double ess_floor = 2.0;

  std::size_t C = 100;
  std::size_t O = 16;
  double learning_rate = 0.1;
  /// Adam step size for state values; unset means learning_rate.
  std::optional<double> state_learning_rate;
  double temperature_start = 5.0;
  double temperature_end = 0.5;
  std::optional<double> temperature_fixed;
  double state_lo = -10.0;
  double state_hi = 10.0;
  /// State of Random-Fixed designs; unset means 0 for single-target and 5 otherwise.
  std::optional<double> random_fixed_state;

  std::size_t bootstrap_replicates = 30;
  std::size_t learner_restarts = 5;
  std::size_t particles_per_graph = 100;
  /// Externally supplied particle set (JSON) used instead of a fitted posterior.
  std::optional<std::string> particles_file;

  PriorSpec environment_prior = PriorSpec::environment_default(5);
  PriorSpec particle_prior = PriorSpec::particle_default(5);

  std::size_t immd_designs = 10;
  std::size_t immd_samples = 100;

  GridConfig grid;
  SampleCommandConfig sample;

  std::uint64_t seed = 0;
  /// Pins the ground-truth SCM independently of `seed` when set.
  std::optional<std::uint64_t> scm_seed;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  double random_fixed_value() const;
};

/// Missing keys take defaults; unknown keys and type errors raise ConfigError.
RunConfig config_from_json(const Json& j);
/// Full echo with every default materialized.
Json to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

}  // namespace cbed
