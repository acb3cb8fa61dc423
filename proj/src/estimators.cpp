#include "cbed/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "cbed/posterior.hpp"

namespace cbed {

namespace {
// Contrastive terms whose softmax share is below this are left out of the
// backward pass; their gradient contribution is below double resolution.
constexpr double kNegligibleShare = 1e-17;

// Row-major B x d design views (index b * d + j). Outcomes are simulated under
// the hard mask h; likelihood factors use the soft mask m with a = 1 - m.
struct DesignView {
  const double* m;
  const double* a;
  const double* h;
  const double* ha;
  const double* s;
};
}  // namespace

double pairwise_sum(const double* values, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

// Flattened particle set: per-particle node tables laid out contiguously so the
// inner contrastive loops stay cache friendly.
struct ContrastiveEstimator::Compiled {
  std::size_t d = 0;
  std::size_t count = 0;
  std::vector<std::uint32_t> order;      // count * d, topological
  std::vector<std::uint32_t> par_start;  // count * d + 1
  std::vector<std::uint32_t> par_idx;
  std::vector<double> par_w;
  std::vector<double> inv_var;   // count * d
  std::vector<double> log_norm;  // -0.5 (log var + log 2 pi)
  std::vector<double> sd;

  explicit Compiled(const ParticleSet& set) : d(set.dim()), count(set.size()) {
    order.reserve(count * d);
    par_start.reserve(count * d + 1);
    inv_var.reserve(count * d);
    log_norm.reserve(count * d);
    sd.reserve(count * d);
    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    for (const auto& scm : set.particles) {
      for (std::size_t j : scm.dag().topological_order()) order.push_back(static_cast<std::uint32_t>(j));
      for (std::size_t j = 0; j < d; ++j) {
        par_start.push_back(static_cast<std::uint32_t>(par_idx.size()));
        for (std::size_t p : scm.dag().parents(j)) {
          par_idx.push_back(static_cast<std::uint32_t>(p));
          par_w.push_back(scm.weights()(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)));
        }
        const double v = scm.noise_vars()(static_cast<Eigen::Index>(j));
        inv_var.push_back(1.0 / v);
        log_norm.push_back(-0.5 * (std::log(v) + log_two_pi));
        sd.push_back(std::sqrt(v));
      }
    }
    par_start.push_back(static_cast<std::uint32_t>(par_idx.size()));
  }

  double mean(std::size_t p, std::size_t j, const double* y) const {
    const std::size_t node = p * d + j;
    double m = 0.0;
    for (std::uint32_t e = par_start[node]; e < par_start[node + 1]; ++e) m += par_w[e] * y[par_idx[e]];
    return m;
  }

  // Reparameterized outcomes of particle p for every design in the batch, under the hard mask.
  void simulate(std::size_t p, std::size_t batch, const DesignView& v, const double* eps, double* y) const {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * d;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t j = order[p * d + k];
        const std::size_t node = p * d + j;
        const double mech = mean(p, j, y + row) + sd[node] * eps[row + j];
        y[row + j] = v.h[row + j] * v.s[row + j] + v.ha[row + j] * mech;
      }
    }
  }

  // Factor j is weighted by a_j and centred at m_j s_j + a_j * mechanism mean.
  double loglik(std::size_t p, std::size_t batch, const DesignView& v, const double* y) const {
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * d;
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = row + j;
        if (v.a[k] == 0.0) continue;
        const std::size_t node = p * d + j;
        const double r = y[k] - v.m[k] * v.s[k] - v.a[k] * mean(p, j, y + row);
        total += v.a[k] * (log_norm[node] - 0.5 * r * r * inv_var[node]);
      }
    }
    return total;
  }

  // Accumulates G times the loglik derivatives into gy, gmask and gstates.
  void loglik_backward(std::size_t p, std::size_t batch, const DesignView& v, const double* y, double g, double* gy,
                       double* gmask, double* gstates) const {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * d;
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = row + j;
        const std::size_t node = p * d + j;
        const double mech = mean(p, j, y + row);
        const double r = y[k] - v.m[k] * v.s[k] - v.a[k] * mech;
        gmask[k] -= g * (log_norm[node] - 0.5 * r * r * inv_var[node]);
        if (v.a[k] == 0.0) continue;
        const double q = g * v.a[k] * r * inv_var[node];
        gmask[k] += q * (v.s[k] - mech);
        gstates[k] += q * v.m[k];
        gy[k] -= q;
        const double qa = q * v.a[k];
        for (std::uint32_t e = par_start[node]; e < par_start[node + 1]; ++e) gy[row + par_idx[e]] += qa * par_w[e];
      }
    }
  }

  // Mechanism means w_j . y of particle p for `rows` outcomes stored column-major
  // (column b * d + j holds node j of design b), and the residuals
  // y_j - m_j s_j - a_j * mean of the soft-masked factors.
  void residuals(std::size_t p, std::size_t batch, const DesignView& v, const double* y, std::size_t rows, double* mech,
                 double* r) const {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = b * d + j;
        const std::size_t node = p * d + j;
        double* mk = mech + k * rows;
        double* rk = r + k * rows;
        const double* yk = y + k * rows;
        std::fill(mk, mk + rows, 0.0);
        for (std::uint32_t e = par_start[node]; e < par_start[node + 1]; ++e) {
          const double w = par_w[e];
          const double* yi = y + (b * d + par_idx[e]) * rows;
          for (std::size_t n = 0; n < rows; ++n) mk[n] += w * yi[n];
        }
        const double shift = v.m[k] * v.s[k];
        const double ak = v.a[k];
        for (std::size_t n = 0; n < rows; ++n) rk[n] = yk[n] - shift - ak * mk[n];
      }
    }
  }

  // Pulls gy back through simulate() into the states; gy is consumed as scratch.
  // Outcomes follow the hard mask, so nothing flows to the soft mask here.
  void simulate_backward(std::size_t p, std::size_t batch, const DesignView& v, double* gy, double* gstates) const {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * d;
      for (std::size_t k = d; k-- > 0;) {
        const std::size_t j = order[p * d + k];
        const std::size_t node = p * d + j;
        const double t = gy[row + j];
        if (t == 0.0) continue;
        gstates[row + j] += t * v.h[row + j];
        const double ta = t * v.ha[row + j];
        if (ta == 0.0) continue;
        for (std::uint32_t e = par_start[node]; e < par_start[node + 1]; ++e) gy[row + par_idx[e]] += ta * par_w[e];
      }
    }
  }
};

struct ContrastiveEstimator::Plan {
  std::vector<std::uint32_t> outer;
  std::vector<double> outer_weight;
  bool all_except_outer = false;
  std::vector<std::uint32_t> contrast_start;  // explicit lists, size n_outer + 1
  std::vector<std::uint32_t> contrast_idx;
  std::vector<double> contrast_mult;
  std::vector<double> offsets;  // per particle, empty when unused
  double log_count = 0.0;       // log of the contrastive normalizer (L, L - 1 or L + 1)
  std::vector<double> eps;      // n_outer * B * d
  std::size_t batch = 0;
};

ContrastiveEstimator::ContrastiveEstimator(ParticleSet particles)
    : particles_(std::move(particles)), compiled_(std::make_shared<Compiled>(particles_)) {
  particles_.validate();
}

// Row-major design arrays (index b * d + j) plus the gradient accumulators.
struct ContrastiveEstimator::Arrays {
  std::size_t batch = 0;
  std::vector<double> m, a, h, ha, s;
  std::vector<double> gmask, gstates;
  DesignView view() const { return {m.data(), a.data(), h.data(), ha.data(), s.data()}; }
  std::vector<double> weighted;  // per outer draw: weight * term
};

DesignGradient ContrastiveEstimator::run(const Plan& plan, const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                         bool with_gradient) const {
  const std::size_t d = compiled_->d;
  const std::size_t batch = plan.batch;
  const std::size_t stride = batch * d;
  const std::size_t n_outer = plan.outer.size();

  Arrays arr;
  arr.batch = batch;
  arr.m.resize(stride);
  arr.a.resize(stride);
  arr.h.resize(stride);
  arr.ha.resize(stride);
  arr.s.resize(stride);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto bi = static_cast<Eigen::Index>(b);
      const auto ji = static_cast<Eigen::Index>(j);
      arr.m[b * d + j] = mask(bi, ji);
      arr.a[b * d + j] = 1.0 - mask(bi, ji);
      arr.h[b * d + j] = mask(bi, ji) >= 0.5 ? 1.0 : 0.0;
      arr.ha[b * d + j] = 1.0 - arr.h[b * d + j];
      arr.s[b * d + j] = states(bi, ji);
    }
  }

  DesignGradient out;
  out.grad_mask = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
  out.grad_states = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
  out.terms.assign(n_outer, 0.0);
  out.diagnostics.n_outer = n_outer;

  if (particles_.is_degenerate()) return out;

  arr.gmask.assign(with_gradient ? stride : 0, 0.0);
  arr.gstates.assign(with_gradient ? stride : 0, 0.0);
  arr.weighted.assign(n_outer, 0.0);
  if (plan.all_except_outer) {
    run_all(plan, arr, with_gradient, out);
  } else {
    run_lists(plan, arr, with_gradient, out);
  }

  out.value = pairwise_sum(arr.weighted.data(), arr.weighted.size());
  if (!std::isfinite(out.value)) out.diagnostics.valid = false;
  if (!out.diagnostics.valid) {
    out.diagnostics.warnings.emplace_back("non-finite likelihood or estimate");
    return out;
  }
  if (with_gradient) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < d; ++j) {
        out.grad_mask(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = arr.gmask[b * d + j];
        out.grad_states(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = arr.gstates[b * d + j];
      }
    }
  }
  return out;
}

// Explicit contrastive lists with multiplicities, one outer draw at a time.
void ContrastiveEstimator::run_lists(const Plan& plan, Arrays& arr, bool with_gradient, DesignGradient& out) const {
  const Compiled& c = *compiled_;
  const std::size_t batch = arr.batch;
  const std::size_t stride = batch * c.d;
  const DesignView v = arr.view();
  std::vector<double> y(stride), gy(stride);
  std::vector<double> x;
  const bool has_offsets = !plan.offsets.empty();

  for (std::size_t n = 0; n < plan.outer.size(); ++n) {
    const double w = plan.outer_weight[n];
    if (w == 0.0) continue;
    const std::size_t o = plan.outer[n];
    const double* eps = plan.eps.data() + n * stride;
    c.simulate(o, batch, v, eps, y.data());

    const double ll_outer = c.loglik(o, batch, v, y.data());
    const std::size_t begin = plan.contrast_start[n];
    const std::size_t end = plan.contrast_start[n + 1];
    x.resize(end - begin);
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t l = plan.contrast_idx[e];
      const double ll = l == o ? ll_outer : c.loglik(l, batch, v, y.data());
      x[e - begin] = has_offsets ? ll + plan.offsets[l] : ll;
    }

    double max_x = -std::numeric_limits<double>::infinity();
    for (double v : x) max_x = std::max(max_x, v);
    double sum = 0.0;
    for (std::size_t e = 0; e < x.size(); ++e) sum += plan.contrast_mult[begin + e] * std::exp(x[e] - max_x);
    const double term = ((ll_outer - max_x) - std::log(sum)) + plan.log_count;
    out.terms[n] = term;
    arr.weighted[n] = w * term;
    if (!std::isfinite(term)) {
      out.diagnostics.valid = false;
      continue;
    }
    if (!with_gradient) continue;

    std::fill(gy.begin(), gy.end(), 0.0);
    c.loglik_backward(o, batch, v, y.data(), w, gy.data(), arr.gmask.data(), arr.gstates.data());
    for (std::size_t e = 0; e < x.size(); ++e) {
      const double share = plan.contrast_mult[begin + e] * std::exp(x[e] - max_x) / sum;
      if (share < kNegligibleShare) continue;
      c.loglik_backward(plan.contrast_idx[begin + e], batch, v, y.data(), -w * share, gy.data(), arr.gmask.data(),
                        arr.gstates.data());
    }
    c.simulate_backward(o, batch, v, gy.data(), arr.gstates.data());
  }
}

// Every particle is an outer draw and every other particle contrasts it. Outer
// draws are processed in row blocks with outcomes stored column-major, so each
// particle's likelihood over a block is a handful of vector passes.
void ContrastiveEstimator::run_all(const Plan& plan, Arrays& arr, bool with_gradient, DesignGradient& out) const {
  using Vec = Eigen::Map<Eigen::ArrayXd>;
  using CVec = Eigen::Map<const Eigen::ArrayXd>;
  constexpr std::size_t kBlock = 256;
  const Compiled& c = *compiled_;
  const std::size_t d = c.d;
  const std::size_t batch = arr.batch;
  const std::size_t stride = batch * d;
  const std::size_t count = c.count;
  const bool has_offsets = !plan.offsets.empty();
  const DesignView v = arr.view();
  const double* a = v.a;

  std::vector<double> yrow(stride), gyrow(stride);
  std::vector<double> y, r, mech, x, gy, coef, own, max_x, sum;
  for (std::size_t n0 = 0; n0 < count; n0 += kBlock) {
    const std::size_t rows = std::min(kBlock, count - n0);
    const auto len = static_cast<Eigen::Index>(rows);
    auto column = [&](std::vector<double>& v, std::size_t k) { return Vec(v.data() + k * rows, len); };
    y.assign(stride * rows, 0.0);
    r.assign(stride * rows, 0.0);
    mech.assign(stride * rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      c.simulate(n0 + i, batch, v, plan.eps.data() + (n0 + i) * stride, yrow.data());
      for (std::size_t k = 0; k < stride; ++k) y[k * rows + i] = yrow[k];
    }

    // x[l * rows + i]: log-likelihood of outcome n0 + i under particle l, plus l's offset.
    x.assign(count * rows, 0.0);
    own.assign(rows, 0.0);
    for (std::size_t l = 0; l < count; ++l) {
      c.residuals(l, batch, v, y.data(), rows, mech.data(), r.data());
      Vec xl(x.data() + l * rows, len);
      double norm = 0.0;
      for (std::size_t k = 0; k < stride; ++k) {
        if (a[k] == 0.0) continue;
        const std::size_t node = l * d + k % d;
        norm += a[k] * c.log_norm[node];
        xl -= (0.5 * a[k] * c.inv_var[node]) * column(r, k).square();
      }
      xl += norm;
      if (l >= n0 && l < n0 + rows) own[l - n0] = x[l * rows + (l - n0)];
      if (has_offsets) xl += plan.offsets[l];
    }

    // Leave-one-out log-sum-exp per outcome; x is overwritten with the exponentials.
    max_x.assign(rows, -std::numeric_limits<double>::infinity());
    sum.assign(rows, 0.0);
    for (std::size_t l = 0; l < count; ++l) {
      const double* xl = x.data() + l * rows;
      for (std::size_t i = 0; i < rows; ++i) {
        if (l != n0 + i) max_x[i] = std::max(max_x[i], xl[i]);
      }
    }
    const CVec mx(max_x.data(), len);
    Vec sm(sum.data(), len);
    for (std::size_t l = 0; l < count; ++l) {
      Vec xl(x.data() + l * rows, len);
      for (Eigen::Index i = 0; i < len; ++i) xl[i] = std::exp(xl[i] - mx[i]);
      if (l >= n0 && l < n0 + rows) xl[static_cast<Eigen::Index>(l - n0)] = 0.0;
      sm += xl;
    }
    bool block_valid = true;
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t n = n0 + i;
      const double w = plan.outer_weight[n];
      if (w == 0.0) continue;
      const double term = ((own[i] - max_x[i]) - std::log(sum[i])) + plan.log_count;
      out.terms[n] = term;
      arr.weighted[n] = w * term;
      if (!std::isfinite(term)) {
        out.diagnostics.valid = false;
        block_valid = false;
      }
    }
    if (!with_gradient || !block_valid) continue;

    // Backward: outcome i puts weight w_i (1[l = i] - share_il) on particle l's
    // log-likelihood. Negligible shares are dropped as in the list path.
    Eigen::ArrayXd neg_w_over_sum(len);
    for (std::size_t i = 0; i < rows; ++i) neg_w_over_sum[static_cast<Eigen::Index>(i)] = -plan.outer_weight[n0 + i] / sum[i];
    gy.assign(stride * rows, 0.0);
    coef.resize(rows);
    Vec cf(coef.data(), len);
    const CVec sm_c(sum.data(), len);
    for (std::size_t l = 0; l < count; ++l) {
      const Vec el(x.data() + l * rows, len);
      const bool is_block = l >= n0 && l < n0 + rows;
      if (!is_block && (el < kNegligibleShare * sm_c).all()) continue;
      cf = (el >= kNegligibleShare * sm_c).select(el * neg_w_over_sum, 0.0);
      if (is_block) cf[static_cast<Eigen::Index>(l - n0)] = plan.outer_weight[l];
      c.residuals(l, batch, v, y.data(), rows, mech.data(), r.data());
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t k = b * d + j;
          const std::size_t node = l * d + j;
          const Vec rk = column(r, k);
          arr.gmask[k] -= c.log_norm[node] * cf.sum() - 0.5 * c.inv_var[node] * (cf * rk.square()).sum();
          if (a[k] == 0.0) continue;
          // reuse the residual column for q = coef * a * r / var
          Vec q = column(r, k);
          q = (a[k] * c.inv_var[node]) * cf * q;
          const double q_sum = q.sum();
          arr.gmask[k] += v.s[k] * q_sum - (q * column(mech, k)).sum();
          arr.gstates[k] += v.m[k] * q_sum;
          column(gy, k) -= q;
          for (std::uint32_t e = c.par_start[node]; e < c.par_start[node + 1]; ++e) {
            column(gy, b * d + c.par_idx[e]) += (a[k] * c.par_w[e]) * q;
          }
        }
      }
    }
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t n = n0 + i;
      if (plan.outer_weight[n] == 0.0) continue;
      for (std::size_t k = 0; k < stride; ++k) gyrow[k] = gy[k * rows + i];
      c.simulate_backward(n, batch, v, gyrow.data(), arr.gstates.data());
    }
  }
}

namespace {

void check_design_shape(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states, std::size_t d) {
  if (mask.rows() < 1 || static_cast<std::size_t>(mask.cols()) != d) throw std::invalid_argument("mask must be B x d");
  if (states.rows() != mask.rows() || states.cols() != mask.cols()) throw std::invalid_argument("states must match mask");
}

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

DesignGradient ContrastiveEstimator::nmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                         const NmcOptions& options, std::uint64_t noise_seed, bool with_gradient) const {
  check_design_shape(mask, states, compiled_->d);
  if (options.n_outer < 1 || (options.L < 1 && !options.full_contrast)) throw std::invalid_argument("nmc needs n_outer >= 1 and L >= 1");
  const std::size_t count = particles_.size();
  std::vector<double> cdf(count);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) cdf[i] = acc += particles_.weights[i];
  Rng rng(noise_seed);
  auto draw = [&]() {
    const double u = rng.uniform_open() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<std::uint32_t>(std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), count - 1));
  };

  Plan plan;
  plan.batch = static_cast<std::size_t>(mask.rows());
  plan.outer.resize(options.n_outer);
  for (auto& o : plan.outer) o = draw();
  plan.outer_weight.assign(options.n_outer, 1.0 / static_cast<double>(options.n_outer));
  plan.log_count = std::log(static_cast<double>(options.L + (options.include_outer_in_contrast ? 1 : 0)));

  plan.eps = normals(rng, options.n_outer * plan.batch * compiled_->d);

  if (options.full_contrast) {
    plan.log_count = 0.0;
    std::vector<std::uint32_t> idx;
    std::vector<double> mult;
    for (std::size_t l = 0; l < count; ++l) {
      if (particles_.weights[l] == 0.0) continue;
      idx.push_back(static_cast<std::uint32_t>(l));
      mult.push_back(particles_.weights[l] / cdf.back());
    }
    plan.contrast_start.push_back(0);
    for (std::size_t n = 0; n < options.n_outer; ++n) {
      plan.contrast_idx.insert(plan.contrast_idx.end(), idx.begin(), idx.end());
      plan.contrast_mult.insert(plan.contrast_mult.end(), mult.begin(), mult.end());
      plan.contrast_start.push_back(static_cast<std::uint32_t>(plan.contrast_idx.size()));
    }
    DesignGradient g = run(plan, mask, states, with_gradient);
    g.diagnostics.L = idx.size();
    return g;
  }

  // Contrastive draws, grouped by particle with multiplicities. Drawn after the
  // outer particles and eps so runs that differ only in L share those.
  std::vector<std::uint32_t> counts(count, 0);
  std::vector<std::uint32_t> touched;
  const bool by_counts = 4 * count <= options.L;
  std::size_t last_positive = 0;
  for (std::size_t l = 0; l < count; ++l) {
    if (particles_.weights[l] > 0.0) last_positive = l;
  }
  plan.contrast_start.push_back(0);
  for (std::size_t n = 0; n < options.n_outer; ++n) {
    touched.clear();
    if (by_counts) {
      // Multinomial(L, w) through conditional binomials: same law as L categorical draws.
      std::size_t left = options.L;
      double mass = 1.0;
      for (std::size_t l = 0; l <= last_positive && left > 0; ++l) {
        const double w = particles_.weights[l];
        if (w == 0.0) continue;
        std::size_t c = left;
        if (l < last_positive && w < mass) {
          std::binomial_distribution<std::size_t> binom(left, std::clamp(w / mass, 0.0, 1.0));
          c = binom(rng.engine());
        }
        mass -= w;
        left -= c;
        if (c > 0) {
          counts[l] = static_cast<std::uint32_t>(c);
          touched.push_back(static_cast<std::uint32_t>(l));
        }
      }
    } else {
      for (std::size_t l = 0; l < options.L; ++l) {
        const std::uint32_t idx = draw();
        if (counts[idx]++ == 0) touched.push_back(idx);
      }
    }
    if (options.include_outer_in_contrast) {
      const std::uint32_t o = plan.outer[n];
      if (counts[o]++ == 0) touched.push_back(o);
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t l : touched) {
      plan.contrast_idx.push_back(l);
      plan.contrast_mult.push_back(static_cast<double>(counts[l]));
      counts[l] = 0;
    }
    plan.contrast_start.push_back(static_cast<std::uint32_t>(plan.contrast_idx.size()));
  }

  DesignGradient g = run(plan, mask, states, with_gradient);
  g.diagnostics.L = options.L;
  return g;
}

DesignGradient ContrastiveEstimator::loo_nmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                             std::uint64_t noise_seed, bool with_gradient) const {
  check_design_shape(mask, states, compiled_->d);
  const std::size_t count = particles_.size();
  if (count < 2) throw std::invalid_argument("leave-one-out estimation needs at least two particles");
  Plan plan;
  plan.batch = static_cast<std::size_t>(mask.rows());
  plan.all_except_outer = true;
  plan.outer.resize(count);
  for (std::size_t i = 0; i < count; ++i) plan.outer[i] = static_cast<std::uint32_t>(i);
  plan.outer_weight.assign(count, 1.0 / static_cast<double>(count));
  plan.log_count = std::log(static_cast<double>(count - 1));
  Rng rng(noise_seed);
  plan.eps = normals(rng, count * plan.batch * compiled_->d);
  DesignGradient g = run(plan, mask, states, with_gradient);
  g.diagnostics.L = count;
  return g;
}

DesignGradient ContrastiveEstimator::iwnmc(const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                           const IwnmcOptions& options, std::uint64_t noise_seed,
                                           bool with_gradient) const {
  check_design_shape(mask, states, compiled_->d);
  if (!particles_.log_hist_lik) throw std::invalid_argument("iwnmc needs particles with history log-likelihoods");
  const std::size_t count = particles_.size();
  if (count < 2) throw std::invalid_argument("iwnmc needs at least two particles");
  Plan plan;
  plan.batch = static_cast<std::size_t>(mask.rows());
  plan.all_except_outer = true;
  plan.outer.resize(count);
  for (std::size_t i = 0; i < count; ++i) plan.outer[i] = static_cast<std::uint32_t>(i);
  plan.outer_weight = particles_.weights;
  plan.offsets = *particles_.log_hist_lik;
  plan.log_count = std::log(static_cast<double>(count - 1));
  Rng rng(noise_seed);
  plan.eps = normals(rng, count * plan.batch * compiled_->d);
  DesignGradient g = run(plan, mask, states, with_gradient);
  g.diagnostics.L = count;
  const double ess = effective_sample_size(particles_);
  g.diagnostics.ess = ess;
  if (ess < options.ess_floor) {
    g.diagnostics.warnings.push_back("effective sample size " + std::to_string(ess) + " below floor " +
                                     std::to_string(options.ess_floor));
  }
  return g;
}

Objective make_nmc_objective(std::shared_ptr<const ContrastiveEstimator> estimator, NmcOptions options) {
  return [estimator = std::move(estimator), options](const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                                    std::uint64_t seed) { return estimator->nmc(mask, states, options, seed); };
}

Objective make_iwnmc_objective(std::shared_ptr<const ContrastiveEstimator> estimator, IwnmcOptions options) {
  return [estimator = std::move(estimator), options](const Eigen::MatrixXd& mask, const Eigen::MatrixXd& states,
                                                    std::uint64_t seed) { return estimator->iwnmc(mask, states, options, seed); };
}

EigEstimate to_policy_gradient(const DesignGradient& g, const RelaxedDesignSample& sample) {
  EigEstimate e;
  e.value = g.value;
  e.grad_target_logits = soft_targets_vjp(sample, g.grad_mask);
  e.grad_state_values = g.grad_states;
  e.diagnostics = g.diagnostics;
  return e;
}

EigEstimate nmc(const ParticleSet& posterior, const RelaxedDesignSample& sample, std::size_t n_outer, std::size_t L,
                Rng& rng) {
  const ContrastiveEstimator est(posterior);
  return to_policy_gradient(est.nmc(sample.hard_targets, sample.states, NmcOptions{n_outer, L, false}, rng.next_u64()),
                            sample);
}

EigEstimate iwnmc(const ParticleSet& prior_particles, const RelaxedDesignSample& sample, Rng& rng,
                  const IwnmcOptions& options) {
  const ContrastiveEstimator est(prior_particles);
  return to_policy_gradient(est.iwnmc(sample.hard_targets, sample.states, options, rng.next_u64()), sample);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> design_matrices(const TargetSpec& spec, const std::vector<double>& states,
                                                            std::size_t d) {
  if (states.size() != spec.size()) throw std::invalid_argument("one state per design is required");
  const auto rows = static_cast<Eigen::Index>(spec.size());
  const auto cols = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd st = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t b = 0; b < spec.size(); ++b) {
    for (std::size_t t : spec[b]) {
      if (t >= d) throw std::invalid_argument("target out of range");
      mask(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = 1.0;
    }
    st.row(static_cast<Eigen::Index>(b)).setConstant(states[b]);
  }
  return {mask, st};
}

std::vector<GridCell> eig_grid(const ParticleSet& posterior, const std::vector<TargetSpec>& specs,
                               const std::vector<double>& state_grid, const NmcOptions& options,
                               std::uint64_t noise_seed) {
  const ContrastiveEstimator est(posterior);
  std::vector<GridCell> cells;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const std::size_t batch = specs[si].size();
    std::vector<std::size_t> idx(batch, 0);
    for (;;) {
      GridCell cell;
      cell.spec_index = si;
      for (std::size_t b = 0; b < batch; ++b) cell.states.push_back(state_grid[idx[b]]);
      const auto [mask, st] = design_matrices(specs[si], cell.states, posterior.dim());
      cell.eig = est.nmc(mask, st, options, noise_seed, false).value;
      cells.push_back(std::move(cell));
      // Odometer over state_grid^B, last design varying fastest.
      std::size_t b = batch;
      while (b > 0 && ++idx[b - 1] == state_grid.size()) idx[--b] = 0;
      if (b == 0) break;
    }
  }
  return cells;
}

std::string format_target_spec(const TargetSpec& spec) {
  std::string out;
  for (std::size_t b = 0; b < spec.size(); ++b) {
    if (b > 0) out += '|';
    if (spec[b].empty()) {
      out += "obs";
      continue;
    }
    for (std::size_t k = 0; k < spec[b].size(); ++k) {
      if (k > 0) out += '+';
      out += std::to_string(spec[b][k]);
    }
  }
  return out;
}

void write_grid_csv(std::ostream& out, const std::vector<TargetSpec>& specs, const std::vector<GridCell>& cells) {
  std::size_t batch = specs.empty() ? 0 : specs.front().size();
  out << "target_spec";
  for (std::size_t b = 0; b < batch; ++b) out << ",state_" << (b + 1);
  out << ",eig_nats\n";
  const auto old_precision = out.precision(17);
  for (const auto& cell : cells) {
    out << format_target_spec(specs[cell.spec_index]);
    for (double s : cell.states) out << ',' << s;
    out << ',' << cell.eig << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cbed
