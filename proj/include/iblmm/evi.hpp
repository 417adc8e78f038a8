// Copyright 2026 The iblmm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * Extended variational inference for the Bayesian IBL mixture.
 *
 * The posterior is fully factorized: Gamma factors on every α_md, u_m and v_m,
 * a Dirichlet on π, and a categorical per observation. The two intractable
 * expected log-Gamma ratios are replaced by first-order lower bounds taken at
 * the current posterior means, which makes every factor update closed form.
 * Components whose expected weight collapses are annihilated after
 * convergence.
 */

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iblmm/kmeans.hpp"
#include "iblmm/math.hpp"
#include "iblmm/mixture.hpp"

namespace iblmm {

/// Raised when an update produces a hyperparameter outside its domain.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Gamma(shape, rate) priors on α, u, v and a Dirichlet prior on π.
struct PriorHyperparams {
  Eigen::MatrixXd g, h;  // M × D
  Eigen::VectorXd s, t;  // M
  Eigen::VectorXd p, q;  // M
  Eigen::VectorXd c;     // M

  [[nodiscard]] Eigen::Index components() const noexcept { return c.size(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return g.cols(); }
};

/// Hyperparameters of the factorized posterior plus the responsibilities.
struct VariationalPosterior {
  Eigen::MatrixXd g_star, h_star;  // M × D
  Eigen::VectorXd s_star, t_star;
  Eigen::VectorXd p_star, q_star;
  Eigen::VectorXd c_star;
  Eigen::MatrixXd r;  // N × M

  [[nodiscard]] Eigen::Index components() const noexcept { return c_star.size(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return g_star.cols(); }
};

/// Posterior expectations consumed by the updates.
struct Moments {
  Eigen::MatrixXd alpha_bar, ln_alpha;
  Eigen::VectorXd u_bar, ln_u;
  Eigen::VectorXd v_bar, ln_v;
  Eigen::VectorXd pi_bar, ln_pi;

  [[nodiscard]] Eigen::Index components() const noexcept { return u_bar.size(); }
};

/// Per-component values of the two helping lower bounds.
struct HelpingTerms {
  Eigen::VectorXd r;  // bound on ⟨ln Γ(Σα)/ΠΓ(α)⟩
  Eigen::VectorXd f;  // bound on ⟨ln Γ(u+v)/(Γ(u)Γ(v))⟩
};

struct FitConfig {
  int initial_m = 15;
  int max_iterations = 500;
  double elbo_rel_tolerance = 1e-6;
  double prune_threshold = 1e-5;
  std::uint64_t seed = 0;
  std::optional<PriorHyperparams> prior;  // default_prior when empty
  bool prune_every_iteration = false;
  // Called with every computed iterate (iteration 0 is the initial state),
  // including one the loop then rejects.
  std::function<void(int, const VariationalPosterior&, const PriorHyperparams&)> on_iteration;
};

struct FitReport {
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  int surviving_components = 0;
  std::vector<double> weights_before_pruning;  // ⟨π⟩ at convergence
  std::vector<double> mass_before_pruning;     // Σ_n r_nm / N at convergence
  double rejected_decrease = 0.0;              // > 0 when the last update lowered the bound
  VariationalPosterior posterior;
  IblmmModel point_model;
};

/// Data statistics shared by every update: ln x_nd, ln S_n and ln(1+S_n)
/// where S_n = Σ_d x_nd.
struct ObservationStats {
  Eigen::MatrixXd log_x;       // N × D
  Eigen::MatrixXd log_ratio;   // N × D, ln x_nd − ln S_n
  Eigen::VectorXd log_sum;     // N
  Eigen::VectorXd log1p_sum;   // N

  ObservationStats() = default;
  explicit ObservationStats(const Eigen::MatrixXd& x) {
    require_positive_data(x);
    log_x = x.array().log().matrix();
    const Eigen::VectorXd sums = x.rowwise().sum();
    log_sum = sums.array().log().matrix();
    log1p_sum = sums.array().log1p().matrix();
    log_ratio = log_x.colwise() - log_sum;
  }

  [[nodiscard]] Eigen::Index size() const noexcept { return log_x.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return log_x.cols(); }
};

/// Broad priors: g = s = p = 1, h = t = q = 0.1, c = 0.001.
inline PriorHyperparams default_prior(Eigen::Index m, Eigen::Index d) {
  if (m < 1 || d < 1) {
    throw std::invalid_argument("default_prior: M and D must be >= 1");
  }
  PriorHyperparams prior;
  prior.g = Eigen::MatrixXd::Constant(m, d, 1.0);
  prior.h = Eigen::MatrixXd::Constant(m, d, 0.1);
  prior.s = Eigen::VectorXd::Constant(m, 1.0);
  prior.t = Eigen::VectorXd::Constant(m, 0.1);
  prior.p = Eigen::VectorXd::Constant(m, 1.0);
  prior.q = Eigen::VectorXd::Constant(m, 0.1);
  prior.c = Eigen::VectorXd::Constant(m, 0.001);
  return prior;
}

/// A prior of shape (M, D) whose entries all take the first entry of `like`.
inline PriorHyperparams broadcast_prior(const PriorHyperparams& like, Eigen::Index m, Eigen::Index d) {
  PriorHyperparams prior = default_prior(m, d);
  prior.g.setConstant(like.g(0, 0));
  prior.h.setConstant(like.h(0, 0));
  prior.s.setConstant(like.s[0]);
  prior.t.setConstant(like.t[0]);
  prior.p.setConstant(like.p[0]);
  prior.q.setConstant(like.q[0]);
  prior.c.setConstant(like.c[0]);
  return prior;
}

namespace detail {

template <typename Derived>
void require_all_positive(const Eigen::DenseBase<Derived>& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v.derived().coeff(i);
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw NumericalError(std::string(name) + " entry " + std::to_string(i) +
                           " is not strictly positive: " + std::to_string(x));
    }
  }
}

template <typename Derived>
void require_all_finite(const Eigen::DenseBase<Derived>& v, const char* name) {
  if (!v.derived().allFinite()) {
    throw NumericalError(std::string(name) + " has a non-finite entry");
  }
}

inline Eigen::VectorXd responsibility_mass(const Eigen::MatrixXd& r) {
  return r.colwise().sum().transpose();
}

}  // namespace detail

inline void validate(const PriorHyperparams& prior) {
  const Eigen::Index m = prior.c.size();
  if (m < 1 || prior.g.rows() != m || prior.h.rows() != m || prior.h.cols() != prior.g.cols() ||
      prior.s.size() != m || prior.t.size() != m || prior.p.size() != m || prior.q.size() != m) {
    throw std::invalid_argument("prior hyperparameters have inconsistent shapes");
  }
  detail::require_all_positive(prior.g, "prior g");
  detail::require_all_positive(prior.h, "prior h");
  detail::require_all_positive(prior.s, "prior s");
  detail::require_all_positive(prior.t, "prior t");
  detail::require_all_positive(prior.p, "prior p");
  detail::require_all_positive(prior.q, "prior q");
  detail::require_all_positive(prior.c, "prior c");
}

inline void validate(const VariationalPosterior& post) {
  detail::require_all_positive(post.g_star, "g*");
  detail::require_all_positive(post.h_star, "h*");
  detail::require_all_positive(post.s_star, "s*");
  detail::require_all_positive(post.t_star, "t*");
  detail::require_all_positive(post.p_star, "p*");
  detail::require_all_positive(post.q_star, "q*");
  detail::require_all_positive(post.c_star, "c*");
}

/// Expectations of every factor under the current posterior.
inline Moments compute_moments(const VariationalPosterior& post) {
  validate(post);
  auto psi = [](double a) { return digamma(a); };
  Moments mo;
  mo.alpha_bar = post.g_star.cwiseQuotient(post.h_star);
  mo.ln_alpha = post.g_star.unaryExpr(psi) - post.h_star.array().log().matrix();
  mo.u_bar = post.s_star.cwiseQuotient(post.t_star);
  mo.ln_u = post.s_star.unaryExpr(psi) - post.t_star.array().log().matrix();
  mo.v_bar = post.p_star.cwiseQuotient(post.q_star);
  mo.ln_v = post.p_star.unaryExpr(psi) - post.q_star.array().log().matrix();
  const double c_total = post.c_star.sum();
  mo.pi_bar = post.c_star / c_total;
  mo.ln_pi = (post.c_star.unaryExpr(psi).array() - digamma(c_total)).matrix();
  return mo;
}

/// Tangent lower bound on ⟨ln Γ(Σ_d α_md) − Σ_d ln Γ(α_md)⟩ at the posterior mean.
inline double helping_r(const Moments& mo, Eigen::Index m) {
  const auto abar = mo.alpha_bar.row(m);
  const auto lna = mo.ln_alpha.row(m);
  detail::require_all_finite(abar, "alpha_bar");
  detail::require_all_finite(lna, "ln_alpha");
  const double total = abar.sum();
  const double psi_total = digamma(total);
  double acc = ln_gamma(total);
  for (Eigen::Index d = 0; d < abar.size(); ++d) {
    const double a = abar[d];
    acc -= ln_gamma(a);
    acc += (psi_total - digamma(a)) * (lna[d] - std::log(a)) * a;
  }
  return acc;
}

/// Tangent lower bound on ⟨ln Γ(u+v) − ln Γ(u) − ln Γ(v)⟩ at the posterior mean.
inline double helping_f(const Moments& mo, Eigen::Index m) {
  const double u = mo.u_bar[m];
  const double v = mo.v_bar[m];
  const double lnu = mo.ln_u[m];
  const double lnv = mo.ln_v[m];
  if (!std::isfinite(u) || !std::isfinite(v) || !std::isfinite(lnu) || !std::isfinite(lnv)) {
    throw NumericalError("helping_f: non-finite moments");
  }
  const double psi_uv = digamma(u + v);
  return ln_gamma(u + v) - ln_gamma(u) - ln_gamma(v) + (psi_uv - digamma(u)) * (lnu - std::log(u)) * u +
         (psi_uv - digamma(v)) * (lnv - std::log(v)) * v;
}

inline HelpingTerms helping_terms(const Moments& mo) {
  const Eigen::Index m = mo.components();
  HelpingTerms ht{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    ht.r[k] = helping_r(mo, k);
    ht.f[k] = helping_f(mo, k);
  }
  return ht;
}

/// ln ρ_nm: the surrogate log joint of observation n under component m.
inline Eigen::MatrixXd log_rho(const ObservationStats& stats, const Moments& mo, const HelpingTerms& ht) {
  const Eigen::Index m = mo.components();
  if (mo.alpha_bar.cols() != stats.dim()) {
    throw std::invalid_argument("moments and data disagree on dimension");
  }
  const Eigen::VectorXd alpha_total = mo.alpha_bar.rowwise().sum();
  const Eigen::RowVectorXd bias = (mo.ln_pi + ht.r + ht.f).transpose();
  const Eigen::RowVectorXd sum_coef = (mo.u_bar - alpha_total).transpose();
  const Eigen::RowVectorXd tail_coef = (mo.u_bar + mo.v_bar).transpose();
  Eigen::MatrixXd out = stats.log_x * (mo.alpha_bar.array() - 1.0).matrix().transpose();
  out += stats.log_sum * sum_coef;
  out -= stats.log1p_sum * tail_coef;
  out.rowwise() += bias;
  (void)m;
  return out;
}

inline constexpr double kResponsibilityFloor = 1e-300;

/// Variational E-step: row-normalized exp(ln ρ).
inline Eigen::MatrixXd e_step(const ObservationStats& stats, const Moments& mo, const HelpingTerms& ht) {
  const Eigen::MatrixXd lr = log_rho(stats, mo, ht);
  Eigen::MatrixXd r(lr.rows(), lr.cols());
  std::vector<double> row(static_cast<std::size_t>(lr.cols()));
  for (Eigen::Index n = 0; n < lr.rows(); ++n) {
    for (Eigen::Index k = 0; k < lr.cols(); ++k) row[k] = lr(n, k);
    const double norm = log_sum_exp(row);
    double total = 0.0;
    for (Eigen::Index k = 0; k < lr.cols(); ++k) {
      double v = std::exp(row[k] - norm);
      if (v < kResponsibilityFloor) v = 0.0;
      r(n, k) = v;
      total += v;
    }
    r.row(n) /= total;
  }
  return r;
}

/// Gamma posterior on every α_md.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> update_alpha(const PriorHyperparams& prior, const Moments& mo,
                                                                const Eigen::MatrixXd& r,
                                                                const ObservationStats& stats) {
  const Eigen::VectorXd mass = detail::responsibility_mass(r);
  const Eigen::Index m = prior.components();
  const Eigen::Index d = prior.dim();
  Eigen::MatrixXd g_star(m, d);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double psi_total = digamma(mo.alpha_bar.row(k).sum());
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = mo.alpha_bar(k, j);
      g_star(k, j) = prior.g(k, j) + (psi_total - digamma(a)) * a * mass[k];
    }
  }
  Eigen::MatrixXd h_star = prior.h - r.transpose() * stats.log_ratio;
  detail::require_all_positive(g_star, "g*");
  detail::require_all_positive(h_star, "h*");
  return {std::move(g_star), std::move(h_star)};
}

/// Gamma posterior on every u_m.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> update_u(const PriorHyperparams& prior, const Moments& mo,
                                                            const Eigen::MatrixXd& r,
                                                            const ObservationStats& stats) {
  const Eigen::VectorXd mass = detail::responsibility_mass(r);
  const Eigen::Index m = prior.components();
  Eigen::VectorXd s_star(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double u = mo.u_bar[k];
    s_star[k] = prior.s[k] + (digamma(u + mo.v_bar[k]) - digamma(u)) * u * mass[k];
  }
  Eigen::VectorXd t_star = prior.t - r.transpose() * (stats.log_sum - stats.log1p_sum);
  detail::require_all_positive(s_star, "s*");
  detail::require_all_positive(t_star, "t*");
  return {std::move(s_star), std::move(t_star)};
}

/// Gamma posterior on every v_m.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> update_v(const PriorHyperparams& prior, const Moments& mo,
                                                            const Eigen::MatrixXd& r,
                                                            const ObservationStats& stats) {
  const Eigen::VectorXd mass = detail::responsibility_mass(r);
  const Eigen::Index m = prior.components();
  Eigen::VectorXd p_star(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double v = mo.v_bar[k];
    p_star[k] = prior.p[k] + (digamma(mo.u_bar[k] + v) - digamma(v)) * v * mass[k];
  }
  Eigen::VectorXd q_star = prior.q + r.transpose() * stats.log1p_sum;
  detail::require_all_positive(p_star, "p*");
  detail::require_all_positive(q_star, "q*");
  return {std::move(p_star), std::move(q_star)};
}

/// Dirichlet posterior on π.
inline Eigen::VectorXd update_pi(const PriorHyperparams& prior, const Eigen::MatrixXd& r) {
  if (r.rows() == 0) return prior.c;
  return detail::responsibility_mass(r) + prior.c;
}

namespace detail {

/// Σ over entries of shape·ln(rate) − ln Γ(shape): the log-normalizers of a
/// set of independent Gamma densities.
inline double gamma_log_norm(const Eigen::ArrayXXd& shape, const Eigen::ArrayXXd& rate) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < shape.size(); ++i) {
    acc += shape(i) * std::log(rate(i)) - ln_gamma(shape(i));
  }
  return acc;
}

/// ⟨ln Gamma(x | shape, rate)⟩ up to the normalizer, for E[x] and E[ln x].
inline double gamma_log_kernel(const Eigen::ArrayXXd& shape, const Eigen::ArrayXXd& rate,
                               const Eigen::ArrayXXd& mean, const Eigen::ArrayXXd& log_mean) {
  return ((shape - 1.0) * log_mean - rate * mean).sum();
}

inline double dirichlet_log_norm(const Eigen::VectorXd& c) {
  return -ln_multivariate_beta(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())));
}

}  // namespace detail

/// The surrogate objective: expected surrogate log joint minus the expected
/// log of every posterior factor. Prior normalizers are included, so the bound
/// is zero when the posterior equals the prior and there is no data.
inline double elbo(const ObservationStats& stats, const VariationalPosterior& post, const Moments& mo,
                   const PriorHyperparams& prior) {
  const HelpingTerms ht = helping_terms(mo);
  double data_term = 0.0;
  double entropy_z = 0.0;
  if (stats.size() > 0) {
    const Eigen::MatrixXd lr = log_rho(stats, mo, ht);
    for (Eigen::Index n = 0; n < lr.rows(); ++n) {
      for (Eigen::Index k = 0; k < lr.cols(); ++k) {
        const double rnk = post.r(n, k);
        if (rnk > 0.0) {
          data_term += rnk * lr(n, k);
          entropy_z += rnk * std::log(rnk);
        }
      }
    }
  }

  using detail::gamma_log_kernel;
  using detail::gamma_log_norm;
  const auto ab = mo.alpha_bar.array();
  const auto la = mo.ln_alpha.array();
  const auto ub = mo.u_bar.array();
  const auto lu = mo.ln_u.array();
  const auto vb = mo.v_bar.array();
  const auto lv = mo.ln_v.array();

  const double log_prior = gamma_log_norm(prior.g.array(), prior.h.array()) +
                           gamma_log_kernel(prior.g.array(), prior.h.array(), ab, la) +
                           gamma_log_norm(prior.s.array(), prior.t.array()) +
                           gamma_log_kernel(prior.s.array(), prior.t.array(), ub, lu) +
                           gamma_log_norm(prior.p.array(), prior.q.array()) +
                           gamma_log_kernel(prior.p.array(), prior.q.array(), vb, lv) +
                           detail::dirichlet_log_norm(prior.c) +
                           ((prior.c.array() - 1.0) * mo.ln_pi.array()).sum();

  const double log_q = gamma_log_norm(post.g_star.array(), post.h_star.array()) +
                       gamma_log_kernel(post.g_star.array(), post.h_star.array(), ab, la) +
                       gamma_log_norm(post.s_star.array(), post.t_star.array()) +
                       gamma_log_kernel(post.s_star.array(), post.t_star.array(), ub, lu) +
                       gamma_log_norm(post.p_star.array(), post.q_star.array()) +
                       gamma_log_kernel(post.p_star.array(), post.q_star.array(), vb, lv) +
                       detail::dirichlet_log_norm(post.c_star) +
                       ((post.c_star.array() - 1.0) * mo.ln_pi.array()).sum();

  const double value = data_term + log_prior - entropy_z - log_q;
  if (!std::isfinite(value)) {
    throw NumericalError("elbo: non-finite value");
  }
  return value;
}

/// Drops every component whose weight is at or below `threshold`. Surviving
/// Dirichlet counts are kept as they are; responsibilities are renormalized
/// over the survivors.
inline std::pair<VariationalPosterior, Moments> prune(const VariationalPosterior& post,
                                                      std::span<const double> weights, double threshold) {
  if (static_cast<Eigen::Index>(weights.size()) != post.components()) {
    throw std::invalid_argument("prune: one weight per component required");
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < post.components(); ++k) {
    if (weights[static_cast<std::size_t>(k)] > threshold) keep.push_back(k);
  }
  if (keep.empty()) {
    throw std::runtime_error("prune: every component is at or below the threshold");
  }
  const auto count = static_cast<Eigen::Index>(keep.size());
  VariationalPosterior out;
  out.g_star.resize(count, post.dim());
  out.h_star.resize(count, post.dim());
  out.s_star.resize(count);
  out.t_star.resize(count);
  out.p_star.resize(count);
  out.q_star.resize(count);
  out.c_star.resize(count);
  out.r.resize(post.r.rows(), count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index k = keep[i];
    out.g_star.row(i) = post.g_star.row(k);
    out.h_star.row(i) = post.h_star.row(k);
    out.s_star[i] = post.s_star[k];
    out.t_star[i] = post.t_star[k];
    out.p_star[i] = post.p_star[k];
    out.q_star[i] = post.q_star[k];
    out.c_star[i] = post.c_star[k];
    out.r.col(i) = post.r.col(k);
  }
  for (Eigen::Index n = 0; n < out.r.rows(); ++n) {
    const double total = out.r.row(n).sum();
    if (total > 0.0) {
      out.r.row(n) /= total;
    } else {
      out.r.row(n).setConstant(1.0 / static_cast<double>(count));
    }
  }
  Moments mo_out = compute_moments(out);
  return {std::move(out), std::move(mo_out)};
}

/// Prunes on the expected weights ⟨π_m⟩.
inline std::pair<VariationalPosterior, Moments> prune(const VariationalPosterior& post, const Moments& mo,
                                                      double threshold) {
  return prune(post, std::span<const double>(mo.pi_bar.data(), static_cast<std::size_t>(mo.pi_bar.size())),
               threshold);
}

/// Share of the responsibility mass held by each component, Σ_n r_nm / N.
/// Unlike ⟨π_m⟩ this carries no prior pseudo-count, so an abandoned
/// component reaches zero whatever N is. Falls back to ⟨π_m⟩ without data.
inline std::vector<double> annihilation_weights(const VariationalPosterior& post) {
  const Eigen::Index n = post.r.rows();
  std::vector<double> out(static_cast<std::size_t>(post.components()));
  if (n == 0) {
    const double total = post.c_star.sum();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = post.c_star[static_cast<Eigen::Index>(k)] / total;
    return out;
  }
  const Eigen::VectorXd mass = detail::responsibility_mass(post.r);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = mass[static_cast<Eigen::Index>(k)] / static_cast<double>(n);
  return out;
}

/// Keeps the prior rows belonging to the given surviving components.
inline PriorHyperparams select_components(const PriorHyperparams& prior, const std::vector<Eigen::Index>& keep) {
  const auto count = static_cast<Eigen::Index>(keep.size());
  PriorHyperparams out;
  out.g.resize(count, prior.dim());
  out.h.resize(count, prior.dim());
  out.s.resize(count);
  out.t.resize(count);
  out.p.resize(count);
  out.q.resize(count);
  out.c.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index k = keep[i];
    out.g.row(i) = prior.g.row(k);
    out.h.row(i) = prior.h.row(k);
    out.s[i] = prior.s[k];
    out.t[i] = prior.t[k];
    out.p[i] = prior.p[k];
    out.q[i] = prior.q[k];
    out.c[i] = prior.c[k];
  }
  return out;
}

/// Posterior means as a plain mixture: weights ⟨π⟩, α = g*/h*, u = s*/t*, v = p*/q*.
inline IblmmModel point_estimate(const VariationalPosterior& post) {
  const Moments mo = compute_moments(post);
  IblmmModel model;
  const Eigen::Index m = post.components();
  for (Eigen::Index k = 0; k < m; ++k) {
    model.weights.push_back(mo.pi_bar[k]);
    model.components.push_back(IblParams{mo.alpha_bar.row(k).transpose(), mo.u_bar[k], mo.v_bar[k]});
  }
  double total = 0.0;
  for (double w : model.weights) total += w;
  for (double& w : model.weights) w /= total;
  return model;
}

namespace detail {

/// Method-of-moments starting point for one cluster: the Dirichlet shape of
/// the proportions x/S and the Beta-prime shape of S.
inline IblParams moment_match(const Eigen::MatrixXd& x, const Eigen::VectorXd& weight) {
  const Eigen::Index dim = x.cols();
  const double w = weight.sum();
  IblParams out{Eigen::VectorXd::Constant(dim, 1.0), 2.0, 3.0};
  if (w <= 1.0) return out;

  const Eigen::VectorXd sums = x.rowwise().sum();
  const Eigen::MatrixXd y = x.array().colwise() / sums.array();
  const Eigen::RowVectorXd y_mean = (weight.transpose() * y) / w;
  const Eigen::RowVectorXd y_var =
      (weight.transpose() * (y.rowwise() - y_mean).array().square().matrix()) / w;
  const double s_mean = weight.dot(sums) / w;
  const double s_var = weight.dot((sums.array() - s_mean).square().matrix()) / w;

  auto clamp = [](double v) { return std::clamp(v, 0.05, 1e4); };
  if (dim > 1) {
    double precision = 0.0;
    int used = 0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      if (y_var[d] > 0.0) {
        precision += y_mean[d] * (1.0 - y_mean[d]) / y_var[d] - 1.0;
        ++used;
      }
    }
    precision = used > 0 ? precision / used : static_cast<double>(dim);
    precision = std::max(precision, 0.1 * static_cast<double>(dim));
    for (Eigen::Index d = 0; d < dim; ++d) out.alpha[d] = clamp(precision * y_mean[d]);
  }
  if (s_var > 0.0) {
    const double v = 2.0 + s_mean * (s_mean + 1.0) / s_var;
    out.v = clamp(v);
    out.u = clamp(s_mean * (out.v - 1.0));
  }
  return out;
}

/// Moments of a posterior collapsed onto the given point (⟨ln θ⟩ = ln θ̄).
inline Moments point_moments(const std::vector<IblParams>& points, const Eigen::VectorXd& c) {
  const auto m = static_cast<Eigen::Index>(points.size());
  const Eigen::Index dim = points.front().dim();
  Moments mo;
  mo.alpha_bar.resize(m, dim);
  mo.u_bar.resize(m);
  mo.v_bar.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    mo.alpha_bar.row(k) = points[k].alpha.transpose();
    mo.u_bar[k] = points[k].u;
    mo.v_bar[k] = points[k].v;
  }
  mo.ln_alpha = mo.alpha_bar.array().log().matrix();
  mo.ln_u = mo.u_bar.array().log().matrix();
  mo.ln_v = mo.v_bar.array().log().matrix();
  mo.pi_bar = c / c.sum();
  mo.ln_pi = (c.unaryExpr([](double a) { return digamma(a); }).array() - digamma(c.sum())).matrix();
  return mo;
}

}  // namespace detail

/// One coordinate-ascent M-step: α, u, v then π, refreshing moments after
/// each factor so every update sees the newest expectations.
inline void m_step(const PriorHyperparams& prior, const ObservationStats& stats, VariationalPosterior& post,
                   Moments& mo) {
  std::tie(post.g_star, post.h_star) = update_alpha(prior, mo, post.r, stats);
  mo = compute_moments(post);
  std::tie(post.s_star, post.t_star) = update_u(prior, mo, post.r, stats);
  mo = compute_moments(post);
  std::tie(post.p_star, post.q_star) = update_v(prior, mo, post.r, stats);
  mo = compute_moments(post);
  post.c_star = update_pi(prior, post.r);
  mo = compute_moments(post);
}

/// Builds the starting posterior from initial responsibilities. Every
/// component is expanded around the same point, a moment match of the whole
/// dataset, and one M-step then specializes them to their clusters.
inline std::pair<VariationalPosterior, Moments> initial_posterior(const Eigen::MatrixXd& x,
                                                                  const ObservationStats& stats,
                                                                  const PriorHyperparams& prior,
                                                                  const Eigen::MatrixXd& r) {
  const IblParams start = detail::moment_match(x, Eigen::VectorXd::Ones(x.rows()));
  const std::vector<IblParams> points(static_cast<std::size_t>(r.cols()), start);

  VariationalPosterior post;
  post.r = r;
  post.c_star = update_pi(prior, r);
  const Moments expansion = detail::point_moments(points, post.c_star);
  std::tie(post.g_star, post.h_star) = update_alpha(prior, expansion, post.r, stats);
  std::tie(post.s_star, post.t_star) = update_u(prior, expansion, post.r, stats);
  std::tie(post.p_star, post.q_star) = update_v(prior, expansion, post.r, stats);
  Moments mo = compute_moments(post);
  return {std::move(post), std::move(mo)};
}

inline void validate(const FitConfig& config) {
  if (config.initial_m < 1) throw std::invalid_argument("initial_M must be >= 1");
  if (config.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(config.elbo_rel_tolerance > 0.0)) throw std::invalid_argument("elbo_rel_tolerance must be > 0");
  if (!(config.prune_threshold > 0.0 && config.prune_threshold < 1.0)) {
    throw std::invalid_argument("prune_threshold must lie in (0, 1)");
  }
}

/// Runs the full EVI loop from the given initial responsibilities.
inline FitReport fit(const Eigen::MatrixXd& x, const FitConfig& config, const Eigen::MatrixXd& initial_r) {
  validate(config);
  const Eigen::Index m0 = initial_r.cols();
  if (initial_r.rows() != x.rows()) {
    throw std::invalid_argument("initial responsibilities have the wrong number of rows");
  }
  const ObservationStats stats(x);
  PriorHyperparams prior = config.prior ? *config.prior : default_prior(m0, x.cols());
  validate(prior);
  if (prior.components() != m0 || prior.dim() != x.cols()) {
    throw std::invalid_argument("prior shape does not match (M, D)");
  }

  auto [post, mo] = initial_posterior(x, stats, prior, initial_r);
  FitReport report;
  report.elbo_trace.push_back(elbo(stats, post, mo, prior));
  if (config.on_iteration) config.on_iteration(0, post, prior);

  const double scale_floor = static_cast<double>(x.rows());
  for (int it = 0; it < config.max_iterations; ++it) {
    VariationalPosterior next = post;
    Moments next_mo = mo;
    PriorHyperparams next_prior = prior;
    next.r = e_step(stats, next_mo, helping_terms(next_mo));
    m_step(next_prior, stats, next, next_mo);
    if (config.prune_every_iteration) {
      const auto weights = annihilation_weights(next);
      std::vector<Eigen::Index> keep;
      for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] > config.prune_threshold) keep.push_back(static_cast<Eigen::Index>(k));
      }
      if (!keep.empty() && static_cast<Eigen::Index>(keep.size()) < next.components()) {
        std::tie(next, next_mo) = prune(next, weights, config.prune_threshold);
        next_prior = select_components(next_prior, keep);
      }
    }
    if (config.on_iteration) config.on_iteration(it + 1, next, next_prior);
    const double value = elbo(stats, next, next_mo, next_prior);
    const double previous = report.elbo_trace.back();
    report.iterations = it + 1;
    if (value < previous) {
      // The bound is re-expanded at the new posterior means after every
      // update, which is not a strict ascent step once the fixed point is
      // close. Keep the better iterate and stop.
      report.rejected_decrease = previous - value;
      report.converged = true;
      break;
    }
    post = std::move(next);
    mo = std::move(next_mo);
    prior = std::move(next_prior);
    report.elbo_trace.push_back(value);
    // The bound can sit near zero, so the relative test is floored at N.
    const double scale = std::max(std::abs(previous), scale_floor);
    if (value - previous < config.elbo_rel_tolerance * scale) {
      report.converged = true;
      break;
    }
  }

  report.weights_before_pruning.assign(mo.pi_bar.data(), mo.pi_bar.data() + mo.pi_bar.size());
  report.mass_before_pruning = annihilation_weights(post);
  std::tie(post, mo) = prune(post, report.mass_before_pruning, config.prune_threshold);
  report.surviving_components = static_cast<int>(post.components());
  report.point_model = point_estimate(post);
  report.posterior = std::move(post);
  return report;
}

/// Algorithm entry point: k-means initialization followed by the EVI loop.
inline FitReport fit(const Eigen::MatrixXd& x, const FitConfig& config) {
  validate(config);
  if (x.rows() < config.initial_m) {
    throw std::invalid_argument("fit: " + std::to_string(x.rows()) + " observations for initial_M = " +
                                std::to_string(config.initial_m));
  }
  require_positive_data(x);
  return fit(x, config, kmeans_init(x, config.initial_m, config.seed));
}

}  // namespace iblmm
