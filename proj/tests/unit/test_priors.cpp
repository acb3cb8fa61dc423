#include <doctest.h>

#include <cmath>

#include "cbed/errors.hpp"
#include "cbed/priors.hpp"

using namespace cbed;

TEST_CASE("edge probability extremes") {
  PriorSpec spec = PriorSpec::particle_default(4);
  spec.edge_prob = 0.0;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_dag(spec, rng).edge_count() == 0);
  spec.edge_prob = 1.0;
  spec.d = 3;
  for (int i = 0; i < 100; ++i) {
    const Dag g = sample_dag(spec, rng);
    CHECK(g.edge_count() == 3);
  }
}

TEST_CASE("mean edge count at p = 0.25") {
  PriorSpec spec = PriorSpec::particle_default(5);
  Rng rng(2);
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(sample_dag(spec, rng).edge_count());
  const double mean = sum / n;
  // Binomial(10, 0.25): mean 2.5, variance 1.875
  CHECK(std::abs(mean - 2.5) < 3.0 * std::sqrt(1.875 / n));
}

TEST_CASE("expected edges per vertex sets the pair probability") {
  PriorSpec spec = PriorSpec::environment_default(5);
  CHECK(spec.pair_probability() == doctest::Approx(0.25));
  spec.d = 1;
  CHECK(spec.pair_probability() == 0.0);
  spec.d = 2;
  spec.expected_edges_per_vertex = 3.0;
  CHECK_THROWS_AS(spec.pair_probability(), ConfigError);
  PriorSpec both = PriorSpec::environment_default(3);
  both.edge_prob = 0.5;
  CHECK_THROWS_AS(both.validate(), ConfigError);
  PriorSpec bad = PriorSpec::particle_default(3);
  bad.edge_prob = 1.5;
  Rng rng(3);
  CHECK_THROWS_AS(sample_dag(bad, rng), ConfigError);
}

TEST_CASE("parameter sampling") {
  Rng rng(4);
  PriorSpec spec = PriorSpec::particle_default(3);
  const Scm empty = sample_parameters(Dag::empty(3), spec, rng);
  CHECK(empty.weights().isZero(0.0));

  spec.weight_mean = 1.5;
  spec.weight_var = 0.0;
  const Scm fixed = sample_parameters(Dag(3, {{0, 1}, {1, 2}}), spec, rng);
  CHECK(fixed.weights()(0, 1) == 1.5);
  CHECK(fixed.weights()(1, 2) == 1.5);

  const PriorSpec def = PriorSpec::particle_default(2);
  const int n = 10000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = sample_parameters(Dag(2, {{0, 1}}), def, rng).weights()(0, 1);
    s += w;
    ss += w * w;
  }
  const double mean = s / n;
  const double var = ss / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("noise rules") {
  Rng rng(5);
  const PriorSpec env = PriorSpec::environment_default(4);
  const Scm e = sample_scm(env, rng);
  CHECK(e.noise_vars().isApproxToConstant(1.0, 0.0));
  const PriorSpec part = PriorSpec::particle_default(4);
  for (int i = 0; i < 200; ++i) CHECK(sample_scm(part, rng).noise_vars().minCoeff() >= 1e-2);
}

TEST_CASE("particle sets") {
  const PriorSpec spec = PriorSpec::particle_default(4);
  Rng a(6), b(6);
  const ParticleSet p = sample_particles(spec, 2, a);
  CHECK(p.size() == 2);
  CHECK_FALSE(p.particles[0] == p.particles[1]);
  const ParticleSet q = sample_particles(spec, 2, b);
  CHECK(p.particles[0] == q.particles[0]);
  CHECK(p.particles[1] == q.particles[1]);
  CHECK(p.weights == std::vector<double>{0.5, 0.5});
  CHECK_FALSE(p.log_hist_lik.has_value());
  Rng c(7);
  CHECK_THROWS(sample_particles(spec, 1, c));

  PriorSpec none = spec;
  none.edge_prob = 0.0;
  Rng d(8);
  const ParticleSet e = sample_particles(none, 5, d);
  for (const auto& s : e.particles) CHECK(s.dag() == Dag::empty(4));
  CHECK_FALSE(e.particles[0].noise_vars() == e.particles[1].noise_vars());
}

TEST_CASE("prior draws are exchangeable") {
  // Summary statistics of the first and second particle agree in distribution.
  const PriorSpec spec = PriorSpec::particle_default(4);
  Rng rng(9);
  const int n = 4000;
  double e1 = 0.0, e2 = 0.0, w1 = 0.0, w2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng r = rng.substream(static_cast<std::uint64_t>(i));
    const ParticleSet p = sample_particles(spec, 2, r);
    e1 += static_cast<double>(p.particles[0].dag().edge_count());
    e2 += static_cast<double>(p.particles[1].dag().edge_count());
    w1 += p.particles[0].noise_vars().sum();
    w2 += p.particles[1].noise_vars().sum();
  }
  // edge count ~ Binomial(6, .25): sd 1.06; noise sum sd ~ sqrt(4 * 2)
  CHECK(std::abs(e1 - e2) / n < 4.0 * std::sqrt(2.0 * 1.125 / n));
  CHECK(std::abs(w1 - w2) / n < 4.0 * std::sqrt(2.0 * 8.0 / n));
}
