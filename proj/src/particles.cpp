#include "cbed/particles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cbed {

void Dataset::add(Record record) {
  if (static_cast<std::size_t>(record.y.size()) != d_) throw std::invalid_argument("record outcome length must equal d");
  record.design.validate(d_);
  for (std::size_t k = 0; k < record.design.targets.size(); ++k) {
    if (record.y(static_cast<Eigen::Index>(record.design.targets[k])) != record.design.states[k]) {
      throw std::invalid_argument("intervened outcome entry differs from its design state");
    }
  }
  records_.push_back(std::move(record));
}

void Dataset::append(const SampleMatrix& samples) {
  for (Eigen::Index r = 0; r < samples.values.rows(); ++r) {
    add(Record{samples.provenance, samples.values.row(r).transpose()});
  }
}

void Dataset::append(const Dataset& other) {
  for (const auto& r : other.records()) add(r);
}

std::size_t Dataset::observational_count() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const Record& r) { return r.design.is_observational(); }));
}

ParticleSet ParticleSet::uniform(std::vector<Scm> particles) {
  ParticleSet set;
  const double w = 1.0 / static_cast<double>(particles.size());
  set.weights.assign(particles.size(), w);
  set.particles = std::move(particles);
  return set;
}

void ParticleSet::validate() const {
  if (particles.empty()) throw std::invalid_argument("particle set is empty");
  if (weights.size() != particles.size()) throw std::invalid_argument("one weight per particle is required");
  if (log_hist_lik && log_hist_lik->size() != particles.size()) {
    throw std::invalid_argument("log_hist_lik must be present for all particles or none");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("particle weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("particle weights must sum to one");
  const std::size_t d = dim();
  for (const auto& p : particles) {
    if (p.size() != d) throw std::invalid_argument("particles disagree on dimension");
  }
}

bool ParticleSet::is_degenerate() const {
  const Scm* first = nullptr;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (first == nullptr) {
      first = &particles[i];
    } else if (!(particles[i] == *first)) {
      return false;
    }
  }
  return true;
}

double log_sum_exp(const std::vector<double>& values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(const std::vector<double>& log_weights) {
  std::vector<double> out(log_weights.size());
  if (log_weights.empty()) return out;
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_weights[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

}  // namespace cbed
