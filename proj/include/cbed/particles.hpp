#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cbed/scm.hpp"

namespace cbed {

/// One executed experiment: the design and the observed outcome vector.
struct Record {
  Design design;
  Eigen::VectorXd y;
};

/// Experimental history h_t: observational and interventional records over d variables.
class Dataset {
 public:
  explicit Dataset(std::size_t d = 0) : d_(d) {}

  std::size_t dim() const { return d_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Record>& records() const { return records_; }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  /// Throws std::invalid_argument if the outcome length is wrong or an
  /// intervened entry differs from its design state.
  void add(Record record);
  void append(const SampleMatrix& samples);
  void append(const Dataset& other);

  std::size_t observational_count() const;
  std::size_t interventional_count() const { return size() - observational_count(); }

 private:
  std::size_t d_;
  std::vector<Record> records_;
};

/// Weighted set of SCM particles. log_hist_lik, when present, holds log p(h | theta_l)
/// for the history the weights were computed from.
struct ParticleSet {
  std::vector<Scm> particles;
  std::vector<double> weights;
  std::optional<std::vector<double>> log_hist_lik;

  std::size_t size() const { return particles.size(); }
  std::size_t dim() const { return particles.empty() ? 0 : particles.front().size(); }

  static ParticleSet uniform(std::vector<Scm> particles);
  /// Throws std::invalid_argument when weights are negative, non-finite, do not
  /// sum to one within 1e-12, or sizes disagree.
  void validate() const;
  /// True when every particle carrying positive weight is the same SCM.
  bool is_degenerate() const;
};

/// exp-normalizes log weights in place order (max-shifted).
std::vector<double> softmax(const std::vector<double>& log_weights);

double log_sum_exp(const std::vector<double>& values);

}  // namespace cbed
