#include <doctest.h>

#include <cmath>

#include "cbed/acquisition.hpp"
#include "cbed/errors.hpp"

using namespace cbed;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.d = 3;
  c.B = 2;
  c.T = 2;
  c.N = 20;
  c.L = 8;
  c.n_outer = 8;
  c.C = 3;
  c.O = 2;
  c.bootstrap_replicates = 4;
  c.learner_restarts = 1;
  c.immd_designs = 2;
  c.immd_samples = 20;
  c.environment_prior = PriorSpec::environment_default(3);
  c.particle_prior = PriorSpec::particle_default(3);
  c.seed = 5;
  return c;
}

class SpyEnvironment : public Environment {
 public:
  using Environment::Environment;
  SampleMatrix sample(const Design& design, std::size_t n) override {
    ++samples;
    return Environment::sample(design, n);
  }
  const Scm& truth() const override {
    ++truth_reads;
    return Environment::truth();
  }
  std::size_t samples = 0;
  mutable std::size_t truth_reads = 0;
};

}  // namespace

TEST_CASE("T = 0 emits only the observational metrics row") {
  RunConfig c = small_config();
  c.T = 0;
  Environment env = make_environment(c);
  const RunArtifacts a = run_loop(c, env);
  REQUIRE(a.metrics.size() == 1);
  CHECK(a.metrics[0].batch_index == 0);
  CHECK(a.designs.empty());
  CHECK(a.data.size() == 20);
}

TEST_CASE("record count grows by B n per batch and rows are ordered") {
  RunConfig c = small_config();
  c.n_per_batch_execution = 3;
  Environment env = make_environment(c);
  const RunArtifacts a = run_loop(c, env);
  CHECK(!a.failure);
  CHECK(a.data.size() == c.N + c.T * c.B * 3);
  REQUIRE(a.metrics.size() == c.T + 1);
  for (std::size_t t = 0; t <= c.T; ++t) {
    CHECK(a.metrics[t].batch_index == t);
    CHECK(a.metrics[t].seed == c.seed);
    CHECK(!a.metrics[t].failed);
  }
  CHECK(a.traces.size() == c.T);
  CHECK(a.traces[0].size() == c.C);
}

TEST_CASE("runs are deterministic") {
  for (Strategy s : {Strategy::Policy, Strategy::RandomRandom}) {
    RunConfig c = small_config();
    c.strategy = s;
    Environment e1 = make_environment(c), e2 = make_environment(c);
    const RunArtifacts a = run_loop(c, e1);
    const RunArtifacts b = run_loop(c, e2);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      CHECK(a.metrics[i].e_shd == b.metrics[i].e_shd);
      CHECK(a.metrics[i].i_mmd == b.metrics[i].i_mmd);
    }
    CHECK(a.designs == b.designs);
  }
}

TEST_CASE("prior-only importance-weighted runs touch the truth only for metrics") {
  RunConfig c = small_config();
  c.estimator = EstimatorKind::Iwnmc;
  c.posterior = PosteriorKind::None;
  c.mode = PolicyMode::MultiUnconstrained;
  c.L = 12;
  SpyEnvironment env(make_truth(c), 9);
  const RunArtifacts a = run_loop(c, env);
  CHECK(!a.failure);
  CHECK(env.truth_reads == c.T + 1);
  CHECK(env.samples == 1 + c.T * c.B);
}

TEST_CASE("NMC requires a posterior") {
  RunConfig c = small_config();
  c.posterior = PosteriorKind::None;
  Environment env = make_environment(c);
  CHECK_THROWS_AS(run_loop(c, env), ConfigError);
}

TEST_CASE("random baselines use the fixed states") {
  RunConfig c = small_config();
  c.T = 3;
  Environment env = make_environment(c);
  const RunArtifacts single = run_baseline(c, env, Strategy::RandomFixed);
  for (const auto& batch : single.designs)
    for (const auto& d : batch) {
      CHECK(d.targets.size() == 1);
      for (double s : d.states) CHECK(s == 0.0);
    }
  c.mode = PolicyMode::MultiConstrained;
  c.k = 2;
  Environment env2 = make_environment(c);
  const RunArtifacts multi = run_baseline(c, env2, Strategy::RandomFixed);
  for (const auto& batch : multi.designs)
    for (const auto& d : batch) {
      CHECK(d.targets.size() == 2);
      for (double s : d.states) CHECK(s == 5.0);
    }
  Environment env3 = make_environment(c);
  CHECK(run_baseline(c, env3, Strategy::RandomFixed).designs == multi.designs);
}

TEST_CASE("execute records every design") {
  RunConfig c = small_config();
  Environment env = make_environment(c);
  const DesignBatch batch{Design::observational(), make_design({{1, 2.5}}), make_design({{0, -1.0}, {2, 4.0}})};
  const Dataset out = execute(env, batch, 4);
  REQUIRE(out.size() == 12);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i].design.is_observational());
  for (std::size_t i = 4; i < 8; ++i) CHECK(out[i].y(1) == 2.5);
  for (std::size_t i = 8; i < 12; ++i) {
    CHECK(out[i].y(0) == -1.0);
    CHECK(out[i].y(2) == 4.0);
  }
  CHECK_THROWS(execute(env, {make_design({{7, 1.0}})}, 1));
}

TEST_CASE("exact posterior runs and a failure row stops the loop") {
  RunConfig c = small_config();
  c.posterior = PosteriorKind::Exact;
  c.particles_per_graph = 5;
  Environment env = make_environment(c);
  const RunArtifacts a = run_loop(c, env);
  CHECK(!a.failure);
  CHECK(a.metrics.size() == c.T + 1);

  c.d = 5;
  c.environment_prior = PriorSpec::environment_default(5);
  c.particle_prior = PriorSpec::particle_default(5);
  Environment env5 = make_environment(c);
  const RunArtifacts f = run_loop(c, env5);
  REQUIRE(f.failure);
  REQUIRE(f.metrics.size() == 1);
  CHECK(f.metrics[0].failed);
  CHECK(std::isnan(f.metrics[0].e_shd));
}
