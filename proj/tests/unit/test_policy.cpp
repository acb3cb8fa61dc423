#include <doctest.h>

#include <algorithm>
#include <array>
#include <functional>
#include <random>
#include <cmath>
#include <numeric>

#include "cbed/errors.hpp"
#include "cbed/policy.hpp"
#include "cbed/serialization.hpp"

using namespace cbed;

namespace {

PolicyParams params_with(PolicyMode mode, std::size_t k, const Eigen::MatrixXd& logits, double tau) {
  PolicyParams p;
  p.mode = mode;
  p.k = k;
  p.target_logits = logits;
  p.state_values = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  p.temperature = tau;
  return p;
}

double row_entropy(const Eigen::RowVectorXd& s) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 0.0) h -= s(i) * std::log(s(i));
  return h;
}

}  // namespace

TEST_CASE("near-zero temperature reproduces the Gumbel-max trick") {
  Rng rng(1);
  Eigen::MatrixXd logits(2, 4);
  logits << 0.3, -1.0, 2.0, 0.1, 1.0, 1.0, -0.5, 0.0;
  const PolicyParams p = params_with(PolicyMode::Single, 1, logits, 1e-4);
  for (int rep = 0; rep < 200; ++rep) {
    const RelaxedDesignSample s = sample_relaxed(p, rng);
    for (Eigen::Index b = 0; b < 2; ++b) {
      Eigen::Index best = 0;
      (logits.row(b) + s.perturbation.noise.row(b)).maxCoeff(&best);
      CHECK(s.hard_targets(b, best) == 1.0);
      CHECK(s.hard_targets.row(b).sum() == 1.0);
      Eigen::Index soft_best = 0;
      s.soft_targets.row(b).maxCoeff(&soft_best);
      CHECK(soft_best == best);
    }
  }
}

TEST_CASE("a dominant logit is always selected") {
  Rng rng(2);
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(1, 5);
  logits(0, 3) = 40.0;
  const PolicyParams p = params_with(PolicyMode::Single, 1, logits, 1.0);
  int hits = 0;
  for (int rep = 0; rep < 10000; ++rep) hits += sample_relaxed(p, rng).hard_targets(0, 3) == 1.0 ? 1 : 0;
  CHECK(hits == 10000);
}

TEST_CASE("constrained top-k with separated logits") {
  Rng rng(3);
  Eigen::MatrixXd logits(1, 4);
  logits << 10, 10, -10, -10;
  const PolicyParams p = params_with(PolicyMode::MultiConstrained, 2, logits, 1.0);
  int exact = 0;
  const int n = 10000;
  for (int rep = 0; rep < n; ++rep) {
    const RelaxedDesignSample s = sample_relaxed(p, rng);
    if (s.hard_targets(0, 0) == 1.0 && s.hard_targets(0, 1) == 1.0) ++exact;
    CHECK(s.soft_targets.row(0).sum() == doctest::Approx(2.0).epsilon(1e-6));
  }
  CHECK(exact >= 0.99 * n);
}

TEST_CASE("constrained marginals match a Gumbel top-k Monte Carlo oracle") {
  Eigen::MatrixXd logits(1, 4);
  logits << 1.0, 0.5, 0.0, -1.0;
  const PolicyParams p = params_with(PolicyMode::MultiConstrained, 2, logits, 0.7);
  const int n = 100000;
  Rng rng(4);
  std::vector<double> model(4, 0.0);
  for (int rep = 0; rep < n; ++rep) {
    const RelaxedDesignSample s = sample_relaxed(p, rng);
    for (Eigen::Index i = 0; i < 4; ++i) model[static_cast<std::size_t>(i)] += s.hard_targets(0, i);
  }
  // oracle: perturb with independently generated Gumbel noise and keep the two largest
  std::mt19937_64 eng(12345);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ref(4, 0.0);
  for (int rep = 0; rep < n; ++rep) {
    std::array<std::pair<double, int>, 4> z;
    for (int i = 0; i < 4; ++i) {
      double v = u(eng);
      while (v <= 0.0) v = u(eng);
      z[static_cast<std::size_t>(i)] = {logits(0, i) - std::log(-std::log(v)), i};
    }
    std::sort(z.begin(), z.end(), std::greater<>());
    ref[static_cast<std::size_t>(z[0].second)] += 1;
    ref[static_cast<std::size_t>(z[1].second)] += 1;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double pm = model[i] / n, pr = ref[i] / n;
    CHECK(std::abs(pm - pr) < 4.0 * std::sqrt(2.0 * pr * (1 - pr) / n));
  }
}

TEST_CASE("soft rows satisfy their per-mode constraints") {
  Rng rng(5);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t d = 1 + rng.index(6);
    const std::size_t k = 1 + rng.index(d);
    Eigen::MatrixXd logits(2, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = rng.normal(0, 3);
    const double tau = rng.uniform(0.5, 5.0);
    const RelaxedDesignSample s1 = sample_relaxed(params_with(PolicyMode::Single, 1, logits, tau), rng);
    const RelaxedDesignSample s2 = sample_relaxed(params_with(PolicyMode::MultiUnconstrained, 1, logits, tau), rng);
    const RelaxedDesignSample s3 = sample_relaxed(params_with(PolicyMode::MultiConstrained, k, logits, tau), rng);
    for (Eigen::Index b = 0; b < 2; ++b) {
      CHECK(s1.soft_targets.row(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(s1.hard_targets.row(b).sum() == 1.0);
      CHECK(s2.soft_targets.row(b).minCoeff() > 0.0);
      CHECK(s2.soft_targets.row(b).maxCoeff() < 1.0);
      CHECK(s3.soft_targets.row(b).sum() == doctest::Approx(static_cast<double>(k)).epsilon(1e-6));
      CHECK(s3.hard_targets.row(b).sum() == static_cast<double>(k));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d); ++i) {
        CHECK((s2.hard_targets(b, i) == 0.0 || s2.hard_targets(b, i) == 1.0));
        CHECK(s2.hard_targets(b, i) == (s2.soft_targets(b, i) > 0.5 ? 1.0 : 0.0));
      }
    }
    CHECK(s1.masked_states == s1.hard_targets.cwiseProduct(s1.states));
  }
}

TEST_CASE("shifting a row of logits leaves hard samples unchanged in distribution") {
  Eigen::MatrixXd logits(1, 4);
  logits << 0.5, -0.2, 1.0, 0.0;
  const int n = 100000;
  for (PolicyMode mode : {PolicyMode::Single, PolicyMode::MultiConstrained}) {
    Rng a(6), b(7);
    std::vector<double> ca(4, 0.0), cb(4, 0.0);
    const PolicyParams p = params_with(mode, 2, logits, 1.0);
    const PolicyParams q = params_with(mode, 2, (logits.array() + 3.7).matrix(), 1.0);
    for (int rep = 0; rep < n; ++rep) {
      const auto sa = sample_relaxed(p, a).hard_targets;
      const auto sb = sample_relaxed(q, b).hard_targets;
      for (Eigen::Index i = 0; i < 4; ++i) {
        ca[static_cast<std::size_t>(i)] += sa(0, i);
        cb[static_cast<std::size_t>(i)] += sb(0, i);
      }
    }
    // two-sample chi-square over the per-node selection counts (3 dof for single mode)
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double pooled = (ca[i] + cb[i]) / 2.0;
      chi2 += (ca[i] - pooled) * (ca[i] - pooled) / pooled + (cb[i] - pooled) * (cb[i] - pooled) / pooled;
    }
    CHECK(chi2 < 16.27);  // 0.999 quantile of chi-square with 3 dof
  }
}

TEST_CASE("soft target entropy does not grow as temperature falls") {
  Rng rng(8);
  Eigen::MatrixXd logits(1, 5);
  logits << 0.2, 1.0, -0.3, 0.0, 0.5;
  const std::vector<double> taus{5.0, 2.0, 1.0, 0.5, 0.1};
  std::vector<double> mean_h(taus.size(), 0.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const Perturbation pert = draw_perturbation(PolicyMode::Single, 1, 5, rng);
    for (std::size_t t = 0; t < taus.size(); ++t) {
      mean_h[t] += row_entropy(relax(params_with(PolicyMode::Single, 1, logits, taus[t]), pert).soft_targets.row(0));
    }
  }
  for (std::size_t t = 1; t < taus.size(); ++t) CHECK(mean_h[t] <= mean_h[t - 1]);
}

TEST_CASE("soft target VJP matches finite differences") {
  Rng rng(9);
  for (PolicyMode mode : {PolicyMode::Single, PolicyMode::MultiUnconstrained, PolicyMode::MultiConstrained}) {
    for (int rep = 0; rep < 20; ++rep) {
      const std::size_t d = 2 + rng.index(4);
      Eigen::MatrixXd logits(2, static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = rng.normal();
      const std::size_t k = 1 + rng.index(d - 1);
      const RelaxedDesignSample s = sample_relaxed(params_with(mode, k, logits, rng.uniform(0.5, 3.0)), rng);
      Eigen::MatrixXd up(2, static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < up.size(); ++i) up(i) = rng.normal();
      const Eigen::MatrixXd g = soft_targets_vjp(s, up);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        Eigen::MatrixXd lp = logits, lm = logits;
        lp(i) += h;
        lm(i) -= h;
        const double fd = (up.cwiseProduct(soft_targets_at(s, lp)).sum() - up.cwiseProduct(soft_targets_at(s, lm)).sum()) / (2 * h);
        CHECK(g(i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("hard rows become designs") {
  RelaxedDesignSample s;
  s.mode = PolicyMode::Single;
  s.hard_targets = Eigen::RowVector3d(0, 1, 0);
  s.states = Eigen::RowVector3d(5, -2, 7);
  const DesignBatch b = to_design_batch(s);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == make_design({{1, -2.0}}));

  s.mode = PolicyMode::MultiUnconstrained;
  s.hard_targets = Eigen::MatrixXd::Zero(2, 3);
  s.hard_targets(1, 0) = s.hard_targets(1, 2) = 1.0;
  s.states = Eigen::MatrixXd::Constant(2, 3, 1.0);
  s.states(1, 2) = 4.0;
  const DesignBatch two = to_design_batch(s);
  CHECK(two[0].is_observational());
  CHECK(two[1] == make_design({{0, 1.0}, {2, 4.0}}));

  s.mode = PolicyMode::Single;
  CHECK_THROWS_AS(to_design_batch(s), std::logic_error);
}

TEST_CASE("temperature annealing") {
  const TemperatureSchedule sched;
  CHECK(anneal_temperature(sched, 0, 100) == doctest::Approx(5.0));
  CHECK(anneal_temperature(sched, 100, 100) == doctest::Approx(0.5));
  CHECK(anneal_temperature(sched, 50, 100) == doctest::Approx(std::sqrt(2.5)));
  CHECK(anneal_temperature(sched, 50, 100) == doctest::Approx(1.5811).epsilon(1e-4));
  CHECK_THROWS(anneal_temperature(sched, 101, 100));
}

TEST_CASE("random baselines") {
  Rng rng(10);
  std::vector<int> hits(4, 0);
  for (int rep = 0; rep < 4000; ++rep) {
    const DesignBatch b = random_baseline(PolicyMode::Single, 1, StateRule::fixed(0.0), 2, 4, rng);
    for (const auto& d : b) {
      REQUIRE(d.targets.size() == 1);
      CHECK(d.states[0] == 0.0);
      ++hits[d.targets[0]];
    }
  }
  for (int h : hits) CHECK(std::abs(h - 2000) < 4 * std::sqrt(8000 * 0.25 * 0.75));

  double included = 0.0;
  for (int rep = 0; rep < 2000; ++rep) {
    for (const auto& d : random_baseline(PolicyMode::MultiUnconstrained, 1, StateRule::fixed(5.0), 1, 5, rng)) {
      included += static_cast<double>(d.targets.size());
      for (double s : d.states) CHECK(s == 5.0);
    }
  }
  CHECK(std::abs(included / 10000.0 - 0.5) < 4 * std::sqrt(0.25 / 10000.0));

  double sum = 0.0;
  int count = 0;
  for (int rep = 0; rep < 5000; ++rep) {
    for (const auto& d : random_baseline(PolicyMode::MultiConstrained, 2, StateRule::uniform(-10, 10), 1, 5, rng)) {
      CHECK(d.targets.size() == 2);
      for (double s : d.states) {
        CHECK(s >= -10.0);
        CHECK(s <= 10.0);
        sum += s;
        ++count;
      }
    }
  }
  CHECK(std::abs(sum / count) < 4.0 * std::sqrt(100.0 / 3.0 / count));
}

TEST_CASE("policy parameters") {
  Rng rng(11);
  const PolicyParams p = PolicyParams::initial(PolicyMode::MultiConstrained, 2, 3, 4, 5.0, -10, 10, rng);
  CHECK(p.target_logits.isZero(0.0));
  CHECK(p.state_values.minCoeff() >= -10.0);
  CHECK(p.state_values.maxCoeff() <= 10.0);
  PolicyParams bad = p;
  bad.k = 5;
  CHECK_THROWS(bad.validate());
  bad = p;
  bad.temperature = 0.0;
  CHECK_THROWS(bad.validate());
  CHECK(parse_policy_mode("multi_unconstrained") == PolicyMode::MultiUnconstrained);
  CHECK_THROWS_AS(parse_policy_mode("bogus"), ConfigError);

  PolicyParams c = p;
  c.state_values(0, 0) = 25.0;
  c.state_values(1, 1) = -30.0;
  clip_states(c, -10, 10);
  CHECK(c.state_values(0, 0) == 10.0);
  CHECK(c.state_values(1, 1) == -10.0);

  const PolicyParams back = policy_from_json(Json::parse(to_json(p).dump()));
  CHECK(back.target_logits == p.target_logits);
  CHECK(back.state_values == p.state_values);
  CHECK(back.mode == p.mode);
  CHECK(back.k == p.k);
  CHECK(back.temperature == p.temperature);
  const Json j = to_json(p);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"mode", "k", "target_logits", "state_values", "temperature"});
}
