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
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "iblmm/ibl.hpp"
#include "iblmm/math.hpp"

namespace iblmm {

/// N × D observation matrix (one row per observation) with optional labels.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> labels;  // empty, or one 0-based label per row

  [[nodiscard]] Eigen::Index size() const noexcept { return x.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return x.cols(); }
  [[nodiscard]] bool has_labels() const noexcept { return !labels.empty(); }
};

/// Throws unless every entry of X is finite and strictly positive.
inline void require_positive_data(const Eigen::MatrixXd& x) {
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      const double v = x(n, d);
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("non-positive data at row " + std::to_string(n) + ", column " +
                                    std::to_string(d) + ": " + std::to_string(v));
      }
    }
  }
}

/// A finite mixture of IBL densities sharing one dimension.
struct IblmmModel {
  std::vector<double> weights;
  std::vector<IblParams> components;

  [[nodiscard]] std::size_t size() const noexcept { return components.size(); }
  [[nodiscard]] Eigen::Index dim() const noexcept {
    return components.empty() ? 0 : components.front().dim();
  }
};

inline constexpr double kWeightSumTolerance = 1e-12;

inline void validate(const IblmmModel& model) {
  if (model.components.empty()) {
    throw std::invalid_argument("model must have at least one component");
  }
  if (model.weights.size() != model.components.size()) {
    throw std::invalid_argument("model has " + std::to_string(model.weights.size()) +
                                " weights for " + std::to_string(model.components.size()) +
                                " components");
  }
  double total = 0.0;
  for (std::size_t m = 0; m < model.weights.size(); ++m) {
    if (!(model.weights[m] > 0.0) || !std::isfinite(model.weights[m])) {
      throw std::invalid_argument("weights[" + std::to_string(m) + "] <= 0");
    }
    total += model.weights[m];
  }
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    throw std::invalid_argument("weights sum to " + std::to_string(total) + ", expected 1");
  }
  const Eigen::Index dim = model.components.front().dim();
  for (std::size_t m = 0; m < model.components.size(); ++m) {
    try {
      validate(model.components[m]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("component " + std::to_string(m) + ": " + e.what());
    }
    if (model.components[m].dim() != dim) {
      throw std::invalid_argument("component " + std::to_string(m) + " has dimension " +
                                  std::to_string(model.components[m].dim()) + ", expected " +
                                  std::to_string(dim));
    }
  }
}

namespace detail {

/// ln π_m + ln p(x | component m) for every m.
template <typename Derived>
std::vector<double> joint_log_terms(const Eigen::MatrixBase<Derived>& x, const IblmmModel& model) {
  std::vector<double> terms(model.size());
  for (std::size_t m = 0; m < model.size(); ++m) {
    terms[m] = std::log(model.weights[m]) + log_pdf(x, model.components[m]);
  }
  return terms;
}

inline void check_dims(const Eigen::MatrixXd& x, const IblmmModel& model) {
  if (x.cols() != model.dim()) {
    throw std::invalid_argument("data has " + std::to_string(x.cols()) + " columns, model has dimension " +
                                std::to_string(model.dim()));
  }
}

}  // namespace detail

/// Σ_n ln Σ_m π_m p(x_n | α_m, u_m, v_m).
inline double log_likelihood(const Eigen::MatrixXd& x, const IblmmModel& model) {
  validate(model);
  detail::check_dims(x, model);
  require_positive_data(x);
  double total = 0.0;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const auto terms = detail::joint_log_terms(x.row(n).transpose(), model);
    total += log_sum_exp(terms);
  }
  return total;
}

/// Posterior membership probabilities of one observation.
template <typename Derived>
std::vector<double> component_posteriors(const Eigen::MatrixBase<Derived>& x, const IblmmModel& model) {
  validate(model);
  if (x.size() != model.dim()) {
    throw std::invalid_argument("component_posteriors: dimension mismatch");
  }
  auto terms = detail::joint_log_terms(x, model);
  const double norm = log_sum_exp(terms);
  for (double& t : terms) {
    t = std::exp(t - norm);
  }
  return terms;
}

/// Draws n rows by first drawing a label from the weights, then the row.
inline Dataset sample_mixture(const IblmmModel& model, Eigen::Index n, std::uint64_t seed) {
  validate(model);
  if (n < 0) {
    throw std::invalid_argument("sample_mixture: negative sample count");
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(model.weights.begin(), model.weights.end());
  Dataset out;
  out.x.resize(n, model.dim());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int m = pick(rng);
    out.labels[static_cast<std::size_t>(i)] = m;
    out.x.row(i) = draw(model.components[static_cast<std::size_t>(m)], rng).transpose();
  }
  return out;
}

/// Draws exactly counts[m] rows from component m, in component order.
inline Dataset sample_mixture_stratified(const IblmmModel& model, const std::vector<Eigen::Index>& counts,
                                         std::uint64_t seed) {
  validate(model);
  if (counts.size() != model.size()) {
    throw std::invalid_argument("sample_mixture_stratified: need one count per component");
  }
  Eigen::Index total = 0;
  for (Eigen::Index c : counts) {
    if (c < 0) {
      throw std::invalid_argument("sample_mixture_stratified: negative count");
    }
    total += c;
  }
  std::mt19937_64 rng(seed);
  Dataset out;
  out.x.resize(total, model.dim());
  out.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t m = 0; m < model.size(); ++m) {
    for (Eigen::Index i = 0; i < counts[m]; ++i) {
      out.x.row(row++) = draw(model.components[m], rng).transpose();
      out.labels.push_back(static_cast<int>(m));
    }
  }
  return out;
}

}  // namespace iblmm
