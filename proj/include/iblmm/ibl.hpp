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

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "iblmm/math.hpp"

namespace iblmm {

/// Parameters of one inverted Beta-Liouville density.
///
/// `alpha` holds the Liouville shape vector (one entry per dimension); `u` and
/// `v` are the Beta-prime shapes of the coordinate sum.
struct IblParams {
  Eigen::VectorXd alpha;
  double u = 1.0;
  double v = 1.0;

  [[nodiscard]] Eigen::Index dim() const noexcept { return alpha.size(); }
};

/// Throws std::invalid_argument naming the first violated constraint.
inline void validate(const IblParams& params) {
  if (params.alpha.size() < 1) {
    throw std::invalid_argument("alpha must have at least one entry");
  }
  for (Eigen::Index d = 0; d < params.alpha.size(); ++d) {
    const double a = params.alpha[d];
    if (!std::isfinite(a) || a <= 0.0) {
      throw std::invalid_argument("alpha[" + std::to_string(d) + "] <= 0");
    }
  }
  if (!std::isfinite(params.u) || params.u <= 0.0) {
    throw std::invalid_argument("u <= 0");
  }
  if (!std::isfinite(params.v) || params.v <= 0.0) {
    throw std::invalid_argument("v <= 0");
  }
}

/// Throws std::invalid_argument unless every entry is strictly positive and finite.
template <typename Derived>
void require_positive(const Eigen::DenseBase<Derived>& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x.derived().coeff(i);
    if (!(xi > 0.0) || !std::isfinite(xi)) {
      throw std::invalid_argument("observation entry " + std::to_string(i) +
                                  " is not strictly positive: " + std::to_string(xi));
    }
  }
}

namespace detail {

/// Normalizing constant of the density, independent of x.
inline double ibl_log_norm(const IblParams& p) {
  double sum_alpha = 0.0;
  double sum_lg = 0.0;
  for (Eigen::Index d = 0; d < p.alpha.size(); ++d) {
    sum_alpha += p.alpha[d];
    sum_lg += ln_gamma(p.alpha[d]);
  }
  return ln_gamma(sum_alpha) - sum_lg + ln_gamma(p.u + p.v) - ln_gamma(p.u) - ln_gamma(p.v);
}

}  // namespace detail

/// Log density of x under IBL(alpha, u, v).
template <typename Derived>
double log_pdf(const Eigen::MatrixBase<Derived>& x, const IblParams& params) {
  validate(params);
  if (x.size() != params.dim()) {
    throw std::invalid_argument("log_pdf: dimension mismatch (x has " + std::to_string(x.size()) +
                                ", params have " + std::to_string(params.dim()) + ")");
  }
  require_positive(x);
  double sum_x = 0.0;
  double sum_alpha = 0.0;
  double acc = detail::ibl_log_norm(params);
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double xd = x.derived().coeff(d);
    sum_x += xd;
    sum_alpha += params.alpha[d];
    acc += (params.alpha[d] - 1.0) * std::log(xd);
  }
  acc += (params.u - sum_alpha) * std::log(sum_x);
  acc -= (params.u + params.v) * std::log1p(sum_x);
  return acc;
}

/// Draws one vector as x = s·y with y ~ Dirichlet(alpha) and s ~ BetaPrime(u, v).
template <typename Rng>
Eigen::VectorXd draw(const IblParams& params, Rng& rng) {
  const Eigen::Index dim = params.dim();
  Eigen::VectorXd y(dim);
  double total = 0.0;
  for (Eigen::Index d = 0; d < dim; ++d) {
    std::gamma_distribution<double> g(params.alpha[d], 1.0);
    y[d] = g(rng);
    total += y[d];
  }
  std::gamma_distribution<double> gu(params.u, 1.0);
  std::gamma_distribution<double> gv(params.v, 1.0);
  const double a = gu(rng);
  const double b = gv(rng);
  const double s = a / b;
  // Very small shapes can underflow a gamma draw to zero; the density has no
  // mass there, so resample rather than emit a non-positive coordinate.
  if (!(total > 0.0) || !(s > 0.0) || !std::isfinite(s) || (y.array() <= 0.0).any()) {
    return draw(params, rng);
  }
  return (s / total) * y;
}

/// n i.i.d. rows from IBL(params), deterministic in `seed`.
inline Eigen::MatrixXd sample(const IblParams& params, Eigen::Index n, std::uint64_t seed) {
  validate(params);
  if (n < 1) {
    throw std::invalid_argument("sample: n must be >= 1");
  }
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(n, params.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = draw(params, rng).transpose();
  }
  return out;
}

}  // namespace iblmm
