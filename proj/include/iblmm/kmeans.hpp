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
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iblmm {

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;  // k × D
  int iterations = 0;
};

namespace detail {

inline double squared_distance(const Eigen::MatrixXd& x, Eigen::Index row, const Eigen::MatrixXd& c,
                               Eigen::Index k) {
  return (x.row(row) - c.row(k)).squaredNorm();
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Every cluster is non-empty on
/// return: an emptied cluster is re-seeded at the point farthest from its
/// own centroid.
inline KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iterations = 100) {
  const Eigen::Index n = x.rows();
  if (k < 1) {
    throw std::invalid_argument("kmeans: k must be >= 1");
  }
  if (n < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(n) + " observations for " + std::to_string(k) +
                                " clusters");
  }
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids.resize(k, x.cols());

  // k-means++ seeding.
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  res.centroids.row(0) = x.row(first(rng));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], detail::squared_distance(x, i, res.centroids, c - 1));
      total += nearest[i];
    }
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unif(0.0, total);
      double target = unif(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= nearest[chosen];
        if (target <= 0.0) break;
      }
    } else {
      chosen = first(rng);
    }
    res.centroids.row(c) = x.row(chosen);
  }

  res.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = detail::squared_distance(x, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double dist = detail::squared_distance(x, i, res.centroids, c);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }

    // Re-seed empty clusters from the worst-fitted points.
    std::fill(counts.begin(), counts.end(), 0);
    for (int a : res.assignment) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] <= 1) continue;
        const double dist = detail::squared_distance(x, i, res.centroids, res.assignment[i]);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      --counts[res.assignment[far]];
      res.assignment[far] = c;
      counts[c] = 1;
      changed = true;
    }

    res.centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) res.centroids.row(res.assignment[i]) += x.row(i);
    for (int c = 0; c < k; ++c) res.centroids.row(c) /= static_cast<double>(counts[c]);
    res.iterations = it + 1;
    if (!changed) break;
  }
  return res;
}

/// One-hot N × M responsibilities from a k-means partition of the raw vectors.
inline Eigen::MatrixXd kmeans_init(const Eigen::MatrixXd& x, int m, std::uint64_t seed) {
  const auto km = kmeans(x, m, seed);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(x.rows(), m);
  for (Eigen::Index i = 0; i < x.rows(); ++i) r(i, km.assignment[i]) = 1.0;
  return r;
}

}  // namespace iblmm
