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

// Shared oracles for the test programs: quadrature, Kolmogorov-Smirnov and
// chi-square goodness of fit, Monte Carlo moments of Gamma posteriors.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "iblmm/ibl.hpp"
#include "iblmm/math.hpp"

namespace iblmm::testing {

/// ∫_lo^hi f, where hi may be +inf.
inline double integrate(const std::function<double(double)>& f, double lo, double hi) {
  if (std::isinf(hi)) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate([&](double t) { return f(lo + t); }, 1e-10);
  }
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(f, lo, hi, 1e-10);
}

/// ∫∫ over the box [lo1, hi1] × [lo2, hi2] by nested one-dimensional rules.
inline double integrate2(const std::function<double(double, double)>& f, double lo1, double hi1, double lo2,
                         double hi2) {
  return integrate([&](double x1) { return integrate([&](double x2) { return f(x1, x2); }, lo2, hi2); }, lo1, hi1);
}

/// Density of one IBL component as a plain function of the coordinates.
inline double pdf(const IblParams& p, const Eigen::VectorXd& x) { return std::exp(log_pdf(x, p)); }

/// Two-sided KS statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Asymptotic KS critical value at significance 0.001.
inline double ks_critical_001(std::size_t n) { return 1.94947 / std::sqrt(static_cast<double>(n)); }

/// Upper 0.001 quantile of chi-square with `dof` degrees of freedom.
inline double chi2_critical_001(int dof) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), 0.001));
}

/// Sample mean and standard error.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// Draws from Gamma(shape, rate).
inline double gamma_draw(double shape, double rate, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

}  // namespace iblmm::testing
