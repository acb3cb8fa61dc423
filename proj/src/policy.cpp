#include "cbed/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cbed/errors.hpp"

namespace cbed {

namespace {

constexpr double kLogClamp = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x) {
  const double m = x.maxCoeff();
  Eigen::RowVectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

// Relaxed top-k by successive softmax with exclusion. Returns the k softmax
// vectors (one per row of `alphas`) for a single design row.
Eigen::MatrixXd relaxed_topk_steps(const Eigen::RowVectorXd& perturbed, std::size_t k, double temperature) {
  const auto d = perturbed.size();
  Eigen::MatrixXd alphas(static_cast<Eigen::Index>(k), d);
  Eigen::RowVectorXd r = perturbed;
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::RowVectorXd a = softmax_row(r / temperature);
    alphas.row(static_cast<Eigen::Index>(j)) = a;
    if (j + 1 < k) {
      for (Eigen::Index i = 0; i < d; ++i) r(i) += std::log(std::max(1.0 - a(i), kLogClamp));
    }
  }
  return alphas;
}

Eigen::RowVectorXd soft_row(PolicyMode mode, std::size_t k, double temperature, const Eigen::RowVectorXd& perturbed) {
  switch (mode) {
    case PolicyMode::Single:
      return softmax_row(perturbed / temperature);
    case PolicyMode::MultiUnconstrained: {
      Eigen::RowVectorXd out(perturbed.size());
      for (Eigen::Index i = 0; i < perturbed.size(); ++i) out(i) = sigmoid(perturbed(i) / temperature);
      return out;
    }
    case PolicyMode::MultiConstrained:
      return relaxed_topk_steps(perturbed, k, temperature).colwise().sum();
  }
  throw std::logic_error("unknown policy mode");
}

Eigen::RowVectorXd hard_row(PolicyMode mode, std::size_t k, const Eigen::RowVectorXd& perturbed,
                            const Eigen::RowVectorXd& soft) {
  const auto d = perturbed.size();
  Eigen::RowVectorXd hard = Eigen::RowVectorXd::Zero(d);
  switch (mode) {
    case PolicyMode::Single: {
      Eigen::Index best = 0;
      perturbed.maxCoeff(&best);
      hard(best) = 1.0;
      break;
    }
    case PolicyMode::MultiUnconstrained:
      for (Eigen::Index i = 0; i < d; ++i) hard(i) = soft(i) > 0.5 ? 1.0 : 0.0;
      break;
    case PolicyMode::MultiConstrained: {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return perturbed(a) > perturbed(b); });
      for (std::size_t j = 0; j < k; ++j) hard(idx[j]) = 1.0;
      break;
    }
  }
  return hard;
}

}  // namespace

std::string to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::Single:
      return "single";
    case PolicyMode::MultiUnconstrained:
      return "multi_unconstrained";
    case PolicyMode::MultiConstrained:
      return "multi_constrained";
  }
  return "unknown";
}

PolicyMode parse_policy_mode(std::string_view name) {
  if (name == "single") return PolicyMode::Single;
  if (name == "multi_unconstrained") return PolicyMode::MultiUnconstrained;
  if (name == "multi_constrained") return PolicyMode::MultiConstrained;
  throw ConfigError("unknown policy mode '" + std::string(name) + "'");
}

void PolicyParams::validate() const {
  if (target_logits.rows() < 1 || target_logits.cols() < 1) throw std::invalid_argument("policy needs B >= 1 and d >= 1");
  if (state_values.rows() != target_logits.rows() || state_values.cols() != target_logits.cols()) {
    throw std::invalid_argument("state values must match the logits shape");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (mode == PolicyMode::MultiConstrained && (k < 1 || k > dim())) {
    throw std::invalid_argument("constrained mode needs 1 <= k <= d");
  }
}

PolicyParams PolicyParams::initial(PolicyMode mode, std::size_t k, std::size_t batch, std::size_t d, double temperature,
                                   double state_lo, double state_hi, Rng& rng) {
  PolicyParams p;
  p.mode = mode;
  p.k = k;
  p.temperature = temperature;
  const auto rows = static_cast<Eigen::Index>(batch);
  const auto cols = static_cast<Eigen::Index>(d);
  p.target_logits = Eigen::MatrixXd::Zero(rows, cols);
  p.state_values.resize(rows, cols);
  for (Eigen::Index b = 0; b < rows; ++b) {
    for (Eigen::Index i = 0; i < cols; ++i) p.state_values(b, i) = rng.uniform(state_lo, state_hi);
  }
  p.validate();
  return p;
}

Perturbation draw_perturbation(PolicyMode mode, std::size_t batch, std::size_t d, Rng& rng) {
  Perturbation out{Eigen::MatrixXd(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(d))};
  for (Eigen::Index b = 0; b < out.noise.rows(); ++b) {
    for (Eigen::Index i = 0; i < out.noise.cols(); ++i) {
      out.noise(b, i) = mode == PolicyMode::MultiUnconstrained ? rng.logistic() : rng.gumbel();
    }
  }
  return out;
}

RelaxedDesignSample relax(const PolicyParams& params, const Perturbation& perturbation) {
  params.validate();
  if (perturbation.noise.rows() != params.target_logits.rows() || perturbation.noise.cols() != params.target_logits.cols()) {
    throw std::invalid_argument("perturbation shape must match the policy");
  }
  RelaxedDesignSample s;
  s.logits = params.target_logits;
  s.perturbation = perturbation;
  s.mode = params.mode;
  s.k = params.k;
  s.temperature = params.temperature;
  s.states = params.state_values;
  const auto rows = params.target_logits.rows();
  s.soft_targets.resize(rows, params.target_logits.cols());
  s.hard_targets.resize(rows, params.target_logits.cols());
  for (Eigen::Index b = 0; b < rows; ++b) {
    const Eigen::RowVectorXd z = params.target_logits.row(b) + perturbation.noise.row(b);
    s.soft_targets.row(b) = soft_row(params.mode, params.k, params.temperature, z);
    s.hard_targets.row(b) = hard_row(params.mode, params.k, z, s.soft_targets.row(b));
  }
  s.masked_states = s.hard_targets.cwiseProduct(s.states);
  return s;
}

RelaxedDesignSample sample_relaxed(const PolicyParams& params, Rng& rng) {
  return relax(params, draw_perturbation(params.mode, params.batch_size(), params.dim(), rng));
}

Eigen::MatrixXd soft_targets_at(const RelaxedDesignSample& sample, const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const Eigen::RowVectorXd z = logits.row(b) + sample.perturbation.noise.row(b);
    out.row(b) = soft_row(sample.mode, sample.k, sample.temperature, z);
  }
  return out;
}

Eigen::MatrixXd soft_targets_vjp(const RelaxedDesignSample& sample, const Eigen::MatrixXd& grad_soft) {
  const double tau = sample.temperature;
  Eigen::MatrixXd grad(grad_soft.rows(), grad_soft.cols());
  for (Eigen::Index b = 0; b < grad_soft.rows(); ++b) {
    const Eigen::RowVectorXd up = grad_soft.row(b);
    const Eigen::RowVectorXd s = sample.soft_targets.row(b);
    switch (sample.mode) {
      case PolicyMode::Single:
        grad.row(b) = s.cwiseProduct((up.array() - s.dot(up)).matrix()) / tau;
        break;
      case PolicyMode::MultiUnconstrained:
        grad.row(b) = (up.array() * s.array() * (1.0 - s.array())).matrix() / tau;
        break;
      case PolicyMode::MultiConstrained: {
        const Eigen::RowVectorXd z = sample.logits.row(b) + sample.perturbation.noise.row(b);
        const Eigen::MatrixXd alphas = relaxed_topk_steps(z, sample.k, tau);
        const auto d = z.size();
        Eigen::RowVectorXd grad_r_next = Eigen::RowVectorXd::Zero(d);
        for (std::size_t jj = sample.k; jj-- > 0;) {
          const Eigen::RowVectorXd a = alphas.row(static_cast<Eigen::Index>(jj));
          Eigen::RowVectorXd grad_a = up;
          if (jj + 1 < sample.k) {
            for (Eigen::Index i = 0; i < d; ++i) {
              if (1.0 - a(i) > kLogClamp) grad_a(i) -= grad_r_next(i) / (1.0 - a(i));
            }
          }
          const Eigen::RowVectorXd through_softmax = a.cwiseProduct((grad_a.array() - a.dot(grad_a)).matrix()) / tau;
          grad_r_next = (jj + 1 < sample.k ? grad_r_next : Eigen::RowVectorXd::Zero(d)) + through_softmax;
        }
        grad.row(b) = grad_r_next;
        break;
      }
    }
  }
  return grad;
}

DesignBatch to_design_batch(const RelaxedDesignSample& sample) {
  DesignBatch batch;
  for (Eigen::Index b = 0; b < sample.hard_targets.rows(); ++b) {
    Design design;
    for (Eigen::Index i = 0; i < sample.hard_targets.cols(); ++i) {
      if (sample.hard_targets(b, i) == 1.0) {
        design.targets.push_back(static_cast<std::size_t>(i));
        design.states.push_back(sample.states(b, i));
      }
    }
    if (design.targets.empty() && sample.mode != PolicyMode::MultiUnconstrained) {
      throw std::logic_error("empty target row in a mode that requires targets");
    }
    batch.push_back(std::move(design));
  }
  return batch;
}

double anneal_temperature(const TemperatureSchedule& schedule, std::size_t step, std::size_t total) {
  if (step > total) throw std::invalid_argument("annealing step beyond the schedule");
  if (total == 0) return schedule.start;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return schedule.start * std::pow(schedule.end / schedule.start, frac);
}

DesignBatch random_baseline(PolicyMode mode, std::size_t k, const StateRule& rule, std::size_t batch, std::size_t d,
                            Rng& rng) {
  if (mode == PolicyMode::MultiConstrained && (k < 1 || k > d)) throw std::invalid_argument("constrained mode needs 1 <= k <= d");
  auto state = [&]() { return rule.kind == StateRule::Kind::Fixed ? rule.value : rng.uniform(rule.lo, rule.hi); };
  DesignBatch out;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::pair<std::size_t, double>> assignments;
    switch (mode) {
      case PolicyMode::Single:
        assignments.emplace_back(rng.index(d), 0.0);
        break;
      case PolicyMode::MultiUnconstrained:
        for (std::size_t i = 0; i < d; ++i) {
          if (rng.bernoulli(0.5)) assignments.emplace_back(i, 0.0);
        }
        break;
      case PolicyMode::MultiConstrained: {
        std::vector<std::size_t> nodes(d);
        std::iota(nodes.begin(), nodes.end(), std::size_t{0});
        for (std::size_t j = 0; j < k; ++j) std::swap(nodes[j], nodes[j + rng.index(d - j)]);
        for (std::size_t j = 0; j < k; ++j) assignments.emplace_back(nodes[j], 0.0);
        break;
      }
    }
    std::sort(assignments.begin(), assignments.end());
    for (auto& a : assignments) a.second = state();
    out.push_back(make_design(std::move(assignments)));
  }
  return out;
}

void clip_states(PolicyParams& params, double lo, double hi) {
  params.state_values = params.state_values.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace cbed
