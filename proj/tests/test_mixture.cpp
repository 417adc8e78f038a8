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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "iblmm/mixture.hpp"

namespace {

using iblmm::IblmmModel;
using iblmm::IblParams;

IblParams make(double a1, double a2, double u, double v) {
  Eigen::VectorXd a(2);
  a << a1, a2;
  return {a, u, v};
}

IblmmModel dataset_a() { return {{0.4, 0.6}, {make(12, 24, 8.5, 12.5), make(21, 15, 18, 5)}}; }

// Linear-domain density written out term by term, without log tricks.
double direct_density(const Eigen::VectorXd& x, const IblParams& p) {
  const double s = x.sum();
  const double a = p.alpha.sum();
  double dens = std::tgamma(a) * std::tgamma(p.u + p.v) / (std::tgamma(p.u) * std::tgamma(p.v));
  for (Eigen::Index d = 0; d < x.size(); ++d) dens *= std::pow(x[d], p.alpha[d] - 1.0) / std::tgamma(p.alpha[d]);
  return dens * std::pow(s, p.u - a) * std::pow(1.0 + s, -(p.u + p.v));
}

TEST(Validate, RejectsMalformedModels) {
  auto m = dataset_a();
  EXPECT_NO_THROW(iblmm::validate(m));
  m.weights = {0.5, 0.6};
  EXPECT_THROW(iblmm::validate(m), std::invalid_argument);
  m.weights = {1.0, 0.0};
  EXPECT_THROW(iblmm::validate(m), std::invalid_argument);
  m.weights = {1.0};
  EXPECT_THROW(iblmm::validate(m), std::invalid_argument);
  IblmmModel mixed{{0.5, 0.5}, {make(1, 2, 3, 4), IblParams{Eigen::VectorXd::Ones(3), 1, 1}}};
  EXPECT_THROW(iblmm::validate(mixed), std::invalid_argument);
  EXPECT_THROW(iblmm::validate(IblmmModel{}), std::invalid_argument);
}

TEST(LogLikelihood, SingleComponentIsSumOfLogDensities) {
  const auto x = iblmm::sample(make(3, 4, 5, 6), 200, 1);
  const IblmmModel m{{1.0}, {make(3, 4, 5, 6)}};
  double expected = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) expected += iblmm::log_pdf(x.row(i).transpose(), m.components[0]);
  EXPECT_NEAR(iblmm::log_likelihood(x, m), expected, 1e-10 * std::abs(expected));
}

TEST(LogLikelihood, InvariantUnderComponentDuplication) {
  const auto m = dataset_a();
  const auto data = iblmm::sample_mixture(m, 300, 2);
  IblmmModel split{{0.2, 0.2, 0.6}, {m.components[0], m.components[0], m.components[1]}};
  EXPECT_NEAR(iblmm::log_likelihood(data.x, split), iblmm::log_likelihood(data.x, m), 1e-10);
}

TEST(LogLikelihood, MatchesDirectLinearEvaluation) {
  const auto m = dataset_a();
  const auto data = iblmm::sample_mixture_stratified(m, {200, 300}, 3);
  double direct = 0.0;
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    const Eigen::VectorXd xi = data.x.row(i).transpose();
    double p = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) p += m.weights[k] * direct_density(xi, m.components[k]);
    direct += std::log(p);
  }
  EXPECT_NEAR(iblmm::log_likelihood(data.x, m), direct, 1e-8 * std::abs(direct));
}

TEST(LogLikelihood, InvariantUnderComponentPermutation) {
  const auto m = dataset_a();
  const auto data = iblmm::sample_mixture(m, 300, 4);
  const IblmmModel swapped{{0.6, 0.4}, {m.components[1], m.components[0]}};
  EXPECT_NEAR(iblmm::log_likelihood(data.x, swapped), iblmm::log_likelihood(data.x, m), 1e-12 * 300);
}

TEST(LogLikelihood, Errors) {
  const auto m = dataset_a();
  EXPECT_THROW(iblmm::log_likelihood(Eigen::MatrixXd::Ones(3, 3), m), std::invalid_argument);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(3, 2);
  bad(1, 1) = 0.0;
  EXPECT_THROW(iblmm::log_likelihood(bad, m), std::invalid_argument);
}

TEST(ComponentPosteriors, SingleComponentIsCertain) {
  const IblmmModel m{{1.0}, {make(2, 3, 4, 5)}};
  const auto post = iblmm::component_posteriors(Eigen::Vector2d(0.3, 0.4), m);
  ASSERT_EQ(post.size(), 1u);
  EXPECT_EQ(post[0], 1.0);
}

TEST(ComponentPosteriors, SymmetricModelIsUniform) {
  const IblmmModel m{{0.5, 0.5}, {make(2, 3, 4, 5), make(2, 3, 4, 5)}};
  const auto post = iblmm::component_posteriors(Eigen::Vector2d(0.3, 0.4), m);
  EXPECT_NEAR(post[0], 0.5, 1e-15);
  EXPECT_NEAR(post[1], 0.5, 1e-15);
}

TEST(ComponentPosteriors, PointsFromSecondComponentAreAssignedThere) {
  const auto m = dataset_a();
  const auto x = iblmm::sample(m.components[1], 100, 5);
  int hits = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto post = iblmm::component_posteriors(x.row(i).transpose(), m);
    hits += post[1] > post[0] ? 1 : 0;
  }
  EXPECT_GT(hits, 50);
}

TEST(ComponentPosteriors, AlwaysASimplex) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> shape(0.3, 30.0);
  std::uniform_real_distribution<double> coord(1e-3, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    IblmmModel m;
    const int k = 1 + trial % 5;
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      m.components.push_back(make(shape(rng), shape(rng), shape(rng), shape(rng)));
      m.weights.push_back(shape(rng));
      total += m.weights.back();
    }
    for (double& w : m.weights) w /= total;
    total = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    m.weights.back() += 1.0 - total;
    const auto post = iblmm::component_posteriors(Eigen::Vector2d(coord(rng), coord(rng)), m);
    EXPECT_NEAR(std::accumulate(post.begin(), post.end(), 0.0), 1.0, 1e-12);
    for (double p : post) EXPECT_GE(p, 0.0);
  }
}

TEST(SampleMixture, SingleComponentLabels) {
  const IblmmModel m{{1.0}, {make(2, 3, 4, 5)}};
  const auto data = iblmm::sample_mixture(m, 50, 7);
  EXPECT_TRUE(std::all_of(data.labels.begin(), data.labels.end(), [](int l) { return l == 0; }));
}

TEST(SampleMixture, LabelFrequencyMatchesWeights) {
  const auto data = iblmm::sample_mixture(dataset_a(), 100000, 8);
  const double n = 100000.0;
  const double frac = static_cast<double>(std::count(data.labels.begin(), data.labels.end(), 0)) / n;
  EXPECT_NEAR(frac, 0.4, 3.0 * std::sqrt(0.4 * 0.6 / n));
}

TEST(SampleMixture, StratifiedCountsAreExact) {
  const auto data = iblmm::sample_mixture_stratified(dataset_a(), {200, 300}, 9);
  EXPECT_EQ(data.size(), 500);
  EXPECT_EQ(std::count(data.labels.begin(), data.labels.end(), 0), 200);
  EXPECT_EQ(std::count(data.labels.begin(), data.labels.end(), 1), 300);
}

TEST(SampleMixture, Deterministic) {
  const auto a = iblmm::sample_mixture(dataset_a(), 100, 10);
  const auto b = iblmm::sample_mixture(dataset_a(), 100, 10);
  EXPECT_TRUE((a.x.array() == b.x.array()).all());
  EXPECT_EQ(a.labels, b.labels);
}

TEST(RequirePositiveData, NamesTheCell) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 2);
  x(1, 0) = -1.0;
  try {
    iblmm::require_positive_data(x);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, column 0"), std::string::npos);
  }
}

}  // namespace
