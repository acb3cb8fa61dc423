#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cbed/scm.hpp"

// Independent reference computations used by the tests. Nothing here calls the
// library's likelihood or estimator code.
namespace oracle {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

double mvn_log_density(const Eigen::VectorXd& x, const Gaussian& g);
double gaussian_entropy(const Eigen::MatrixXd& cov);

/// Joint law of the non-intervened coordinates of one design, stacked over a batch.
Gaussian batch_outcome_gaussian(const cbed::Scm& scm, const cbed::DesignBatch& batch);

/// Differential entropy of a mixture of Gaussians in one or two dimensions by
/// midpoint quadrature on a box covering every component by +-12 sd.
double mixture_entropy(const std::vector<Gaussian>& comps, const std::vector<double>& weights,
                       std::size_t points_per_axis = 801);

/// Mutual information between the batch outcome and a discrete hypothesis drawn
/// with the given probabilities: H[mixture] - sum_k w_k H[N_k].
double discrete_eig(const std::vector<cbed::Scm>& hypotheses, const std::vector<double>& weights,
                    const cbed::DesignBatch& batch, std::size_t points_per_axis = 801);

/// log of the marginal likelihood of y = X w + e with w ~ N(0, prior_var I), e ~ N(0, noise_var I).
double blr_log_marginal(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double prior_var, double noise_var);

}  // namespace oracle
