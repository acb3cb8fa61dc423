#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace oracle {

double mvn_log_density(const Eigen::VectorXd& x, const Gaussian& g) {
  const auto k = static_cast<double>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw std::runtime_error("covariance not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(x - g.mean);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < g.cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (z.squaredNorm() + logdet + k * std::log(2.0 * std::numbers::pi));
}

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  const auto k = static_cast<double>(cov.rows());
  return 0.5 * (k * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(cov.determinant()));
}

Gaussian batch_outcome_gaussian(const cbed::Scm& scm, const cbed::DesignBatch& batch) {
  const auto d = static_cast<Eigen::Index>(scm.size());
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  Eigen::Index total = 0;
  for (const auto& design : batch) {
    Eigen::MatrixXd A = scm.weights();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd D = scm.noise_vars();
    std::vector<bool> fixed(static_cast<std::size_t>(d), false);
    for (std::size_t t = 0; t < design.targets.size(); ++t) {
      const auto j = static_cast<Eigen::Index>(design.targets[t]);
      A.col(j).setZero();
      c(j) = design.states[t];
      D(j) = 0.0;
      fixed[static_cast<std::size_t>(j)] = true;
    }
    // y = A^T y + c + e  =>  y = M (c + e)
    const Eigen::MatrixXd M = (Eigen::MatrixXd::Identity(d, d) - A.transpose()).inverse();
    const Eigen::VectorXd mean = M * c;
    const Eigen::MatrixXd cov = M * D.asDiagonal() * M.transpose();
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!fixed[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    const auto f = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd m(f);
    Eigen::MatrixXd s(f, f);
    for (Eigen::Index a = 0; a < f; ++a) {
      m(a) = mean(free[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < f; ++b) s(a, b) = cov(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    means.push_back(m);
    covs.push_back(s);
    total += f;
  }
  Gaussian g{Eigen::VectorXd::Zero(total), Eigen::MatrixXd::Zero(total, total)};
  Eigen::Index off = 0;
  for (std::size_t b = 0; b < means.size(); ++b) {
    const Eigen::Index f = means[b].size();
    g.mean.segment(off, f) = means[b];
    g.cov.block(off, off, f, f) = covs[b];
    off += f;
  }
  return g;
}

double mixture_entropy(const std::vector<Gaussian>& comps, const std::vector<double>& weights,
                       std::size_t points_per_axis) {
  const Eigen::Index dim = comps.front().mean.size();
  if (dim < 1 || dim > 2) throw std::invalid_argument("quadrature supports one or two dimensions");
  std::vector<double> lo(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(dim), -std::numeric_limits<double>::infinity());
  for (const auto& c : comps) {
    for (Eigen::Index a = 0; a < dim; ++a) {
      const double sd = std::sqrt(c.cov(a, a));
      lo[static_cast<std::size_t>(a)] = std::min(lo[static_cast<std::size_t>(a)], c.mean(a) - 12.0 * sd);
      hi[static_cast<std::size_t>(a)] = std::max(hi[static_cast<std::size_t>(a)], c.mean(a) + 12.0 * sd);
    }
  }
  const std::size_t n = points_per_axis;
  const std::size_t ny = dim == 2 ? n : 1;
  std::vector<double> h(static_cast<std::size_t>(dim));
  for (std::size_t a = 0; a < h.size(); ++a) h[a] = (hi[a] - lo[a]) / static_cast<double>(n);
  double total = 0.0;
  Eigen::VectorXd x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    x(0) = lo[0] + (static_cast<double>(i) + 0.5) * h[0];
    for (std::size_t j = 0; j < ny; ++j) {
      if (dim == 2) x(1) = lo[1] + (static_cast<double>(j) + 0.5) * h[1];
      double p = 0.0;
      for (std::size_t k = 0; k < comps.size(); ++k) p += weights[k] * std::exp(mvn_log_density(x, comps[k]));
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  double cell = h[0];
  if (dim == 2) cell *= h[1];
  return total * cell;
}

double discrete_eig(const std::vector<cbed::Scm>& hypotheses, const std::vector<double>& weights,
                    const cbed::DesignBatch& batch, std::size_t points_per_axis) {
  std::vector<Gaussian> comps;
  double conditional = 0.0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    comps.push_back(batch_outcome_gaussian(hypotheses[k], batch));
    conditional += weights[k] * gaussian_entropy(comps.back().cov);
  }
  return mixture_entropy(comps, weights, points_per_axis) - conditional;
}

double blr_log_marginal(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double prior_var, double noise_var) {
  const Eigen::Index n = y.size();
  const Eigen::MatrixXd cov = noise_var * Eigen::MatrixXd::Identity(n, n) + prior_var * X * X.transpose();
  return mvn_log_density(y, Gaussian{Eigen::VectorXd::Zero(n), cov});
}

}  // namespace oracle
