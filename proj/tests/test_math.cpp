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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "iblmm/math.hpp"

namespace {

using iblmm::digamma;
using iblmm::ln_gamma;
using iblmm::log_sum_exp;

constexpr double kEulerGamma = 0.57721566490153286061;

struct Reference {
  double a, ln_gamma, digamma;
};

// 40-digit values rounded to 20 significant digits.
const Reference kReference[] = {
    {0.001, 6.9071788853838536825, -1000.5755719318103005},
    {0.5, 0.57236494292470008707, -1.9635100260214234794},
    {1.0, 0.0, -0.57721566490153286061},
    {1.5, -0.12078223763524522235, 0.036489973978576520559},
    {2.5, 0.28468287047291915963, 0.70315664064524318723},
    {10.0, 12.801827480081469611, 2.2517525890667211076},
    {100.5, 361.43554046777762156, 4.6051743525818452119},
    {1000.0, 5905.2204232091812118, 6.9072551956488120521},
    {1e6, 12815504.56914761166, 13.815510057964190771},
};

TEST(LnGamma, KnownValues) {
  EXPECT_EQ(ln_gamma(1.0), 0.0);
  EXPECT_NEAR(ln_gamma(0.5), 0.5 * std::log(std::numbers::pi), 1e-14);
  EXPECT_NEAR(ln_gamma(10.0), std::log(362880.0), 1e-12);
}

TEST(LnGamma, MatchesHighPrecisionReference) {
  for (const auto& r : kReference) {
    if (r.a <= 100.5) {
      EXPECT_NEAR(ln_gamma(r.a), r.ln_gamma, 1e-12) << "a = " << r.a;
    } else {
      EXPECT_NEAR(ln_gamma(r.a), r.ln_gamma, 1e-14 * r.ln_gamma) << "a = " << r.a;
    }
  }
}

TEST(LnGamma, RejectsNonPositiveAndNonFinite) {
  EXPECT_THROW(ln_gamma(0.0), iblmm::DomainError);
  EXPECT_THROW(ln_gamma(-1.5), iblmm::DomainError);
  EXPECT_THROW(ln_gamma(std::numeric_limits<double>::quiet_NaN()), iblmm::DomainError);
  EXPECT_THROW(ln_gamma(std::numeric_limits<double>::infinity()), iblmm::DomainError);
}

TEST(Digamma, KnownValues) {
  EXPECT_NEAR(digamma(1.0), -kEulerGamma, 1e-13);
  EXPECT_NEAR(digamma(2.0), 1.0 - kEulerGamma, 1e-13);
  EXPECT_NEAR(digamma(0.5), -kEulerGamma - 2.0 * std::numbers::ln2, 1e-13);
}

TEST(Digamma, MatchesHighPrecisionReference) {
  for (const auto& r : kReference) {
    EXPECT_NEAR(digamma(r.a), r.digamma, 1e-13 * std::max(1.0, std::abs(r.digamma))) << "a = " << r.a;
  }
}

TEST(Digamma, RejectsNonPositive) {
  EXPECT_THROW(digamma(0.0), iblmm::DomainError);
  EXPECT_THROW(digamma(-2.0), iblmm::DomainError);
}

// Richardson-extrapolated central difference of ln_gamma.
double finite_difference(double a) {
  const double h = 1e-3 * a;
  auto central = [&](double step) { return (ln_gamma(a + step) - ln_gamma(a - step)) / (2.0 * step); };
  return (4.0 * central(h / 2.0) - central(h)) / 3.0;
}

TEST(Digamma, IsTheDerivativeOfLnGamma) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const double a = unif(rng);
    EXPECT_NEAR(digamma(a), finite_difference(a), 1e-6) << "a = " << a;
  }
}

TEST(Recurrence, HoldsOverWideRange) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> log_unif(std::log(0.5), std::log(1e4));
  for (int i = 0; i < 500; ++i) {
    const double a = std::exp(log_unif(rng));
    const double lg = ln_gamma(a + 1.0);
    EXPECT_NEAR(lg, ln_gamma(a) + std::log(a), 1e-10 * std::max(1.0, std::abs(lg))) << "a = " << a;
    const double dg = digamma(a + 1.0);
    EXPECT_NEAR(dg, digamma(a) + 1.0 / a, 1e-10 * std::max(1.0, std::abs(dg))) << "a = " << a;
  }
}

TEST(LogSumExp, Examples) {
  EXPECT_NEAR(log_sum_exp(std::vector<double>{0.0, 0.0}), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{-1000.0, -1000.0}), -1000.0 + std::numbers::ln2, 1e-12);
  EXPECT_EQ(log_sum_exp(std::vector<double>{3.0}), 3.0);
}

TEST(LogSumExp, ShiftEquivariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 7);
    for (double& x : v) x = normal(rng);
    const double c = normal(rng);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(log_sum_exp(shifted), log_sum_exp(v) + c, 1e-12 * std::max(1.0, std::abs(log_sum_exp(shifted))));
  }
}

TEST(LogSumExp, ToleratesSomeNegativeInfinity) {
  EXPECT_NEAR(log_sum_exp(std::vector<double>{iblmm::kNegInf, 0.0}), 0.0, 0.0);
}

TEST(LogSumExp, Errors) {
  EXPECT_THROW(log_sum_exp(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(log_sum_exp(std::vector<double>{iblmm::kNegInf, iblmm::kNegInf}), iblmm::DomainError);
  EXPECT_THROW(log_sum_exp(std::vector<double>{0.0, std::numeric_limits<double>::quiet_NaN()}), iblmm::DomainError);
}

TEST(MultivariateBeta, MatchesGammaRatio) {
  const std::vector<double> a{2.0, 3.0};
  // B(2, 3) = 1/12
  EXPECT_NEAR(iblmm::ln_multivariate_beta(a), -std::log(12.0), 1e-14);
}

}  // namespace
