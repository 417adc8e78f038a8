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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace iblmm {

/// Thrown when a special function or density is evaluated outside its domain.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// ln Γ(a) for a > 0.
inline double ln_gamma(double a) {
  if (!std::isfinite(a) || a <= 0.0) {
    throw DomainError("ln_gamma: argument must be finite and > 0, got " + std::to_string(a));
  }
  // glibc's lgamma is accurate to a few ulp over the positive axis. The
  // signgam side channel is irrelevant for a > 0.
  return std::lgamma(a);
}

/// Ψ(a) = d/da ln Γ(a) for a > 0.
///
/// Shifts the argument above 10 with Ψ(a) = Ψ(a+1) − 1/a, then applies the
/// asymptotic expansion ln a − 1/(2a) − Σ B_2k / (2k a^2k).
inline double digamma(double a) {
  if (!std::isfinite(a) || a <= 0.0) {
    throw DomainError("digamma: argument must be finite and > 0, got " + std::to_string(a));
  }
  double shift = 0.0;
  while (a < 10.0) {
    shift -= 1.0 / a;
    a += 1.0;
  }
  const double inv = 1.0 / a;
  const double inv2 = inv * inv;
  // B2/2, B4/4, ..., B14/14
  const double series =
      inv2 * (1.0 / 12.0 -
      inv2 * (1.0 / 120.0 -
      inv2 * (1.0 / 252.0 -
      inv2 * (1.0 / 240.0 -
      inv2 * (1.0 / 132.0 -
      inv2 * (691.0 / 32760.0 -
      inv2 * (1.0 / 12.0)))))));
  return shift + std::log(a) - 0.5 * inv - series;
}

/// ln Σ exp(v_i), shifted by the maximum so nothing overflows.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) {
    throw std::invalid_argument("log_sum_exp: empty input");
  }
  for (double x : v) {
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
      throw DomainError("log_sum_exp: non-finite entry");
    }
  }
  const double top = *std::max_element(v.begin(), v.end());
  if (top == kNegInf) {
    throw DomainError("log_sum_exp: every entry is -inf");
  }
  double acc = 0.0;
  for (double x : v) {
    acc += std::exp(x - top);
  }
  return top + std::log(acc);
}

/// ln B(a) for a Dirichlet concentration: Σ ln Γ(a_i) − ln Γ(Σ a_i).
inline double ln_multivariate_beta(std::span<const double> a) {
  double sum = 0.0;
  double acc = 0.0;
  for (double x : a) {
    sum += x;
    acc += ln_gamma(x);
  }
  return acc - ln_gamma(sum);
}

}  // namespace iblmm
