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

// Synthetic benchmarks: the four reference mixtures, parameter recovery,
// model-selection histograms and convergence traces.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iblmm/evi.hpp"
#include "iblmm/io.hpp"
#include "iblmm/mixture.hpp"

namespace iblmm {

struct BenchmarkSpec {
  std::string dataset_id;
  IblmmModel true_model;
  std::vector<Eigen::Index> per_component_counts;
  int runs = 20;
  int initial_m = 0;  // 0 means twice the true number of components
  std::uint64_t seed = 1;
  FitConfig fit;      // initial_m and seed are overridden per run

  [[nodiscard]] int effective_initial_m() const {
    return initial_m > 0 ? initial_m : 2 * static_cast<int>(true_model.size());
  }
  [[nodiscard]] Eigen::Index total_count() const {
    return std::accumulate(per_component_counts.begin(), per_component_counts.end(), Eigen::Index{0});
  }
};

inline void validate(const BenchmarkSpec& spec) {
  validate(spec.true_model);
  if (spec.per_component_counts.size() != spec.true_model.size()) {
    throw std::invalid_argument("benchmark needs one count per true component");
  }
  for (Eigen::Index c : spec.per_component_counts) {
    if (c < 1) throw std::invalid_argument("benchmark counts must be positive");
  }
  if (spec.runs < 1) throw std::invalid_argument("benchmark runs must be >= 1");
  if (spec.initial_m < 0) throw std::invalid_argument("benchmark initial_M must be >= 0");
}

/// The published reference mixtures. Throws for ids other than A to D.
inline BenchmarkSpec benchmark_spec(const std::string& dataset_id) {
  struct Row {
    double a1, a2, u, v, pi;
    Eigen::Index count;
  };
  std::vector<Row> rows;
  if (dataset_id == "A") {
    rows = {{12, 24, 8.5, 12.5, 0.4, 200}, {21, 15, 18, 5, 0.6, 300}};
  } else if (dataset_id == "B") {
    rows = {{12, 24, 8.5, 12.5, 0.2, 120}, {21, 15, 18, 5, 0.3, 180}, {18.5, 8, 4, 16.5, 0.5, 300}};
  } else if (dataset_id == "C") {
    rows = {{12, 21, 8.5, 12.5, 0.1, 80},
            {21, 35, 18, 5, 0.2, 160},
            {32, 28, 4, 16.5, 0.3, 240},
            {2, 18, 24, 8, 0.4, 320}};
  } else if (dataset_id == "D") {
    rows = {{21, 6, 18, 24, 0.1, 100},
            {2, 28, 8, 15, 0.2, 200},
            {18, 68, 24, 16, 0.25, 250},
            {76, 8, 4, 18, 0.3, 300},
            {2, 4, 4, 12, 0.15, 150}};
  } else {
    throw std::invalid_argument("unknown dataset id '" + dataset_id + "' (expected A, B, C or D)");
  }
  BenchmarkSpec spec;
  spec.dataset_id = dataset_id;
  for (const auto& r : rows) {
    Eigen::VectorXd alpha(2);
    alpha << r.a1, r.a2;
    spec.true_model.components.push_back(IblParams{alpha, r.u, r.v});
    spec.true_model.weights.push_back(r.pi);
    spec.per_component_counts.push_back(r.count);
  }
  return spec;
}

/// Splits n across components in proportion to the weights (largest remainder).
inline std::vector<Eigen::Index> proportional_counts(const std::vector<double>& weights, Eigen::Index n) {
  std::vector<Eigen::Index> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  Eigen::Index used = 0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    const double exact = weights[m] * static_cast<double>(n);
    counts[m] = static_cast<Eigen::Index>(std::floor(exact));
    used += counts[m];
    remainders.emplace_back(exact - static_cast<double>(counts[m]), m);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++counts[remainders[i % remainders.size()].second];
  return counts;
}

struct ComponentEstimate {
  Eigen::VectorXd alpha;
  double u = 0.0;
  double v = 0.0;
  double pi = 0.0;
  int matched_runs = 0;
};

struct RunOutcome {
  int run = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  int surviving_components = 0;
  double rejected_decrease = 0.0;
  std::vector<double> elbo_trace;
  IblmmModel estimate;
  std::vector<int> matching;  // true component -> estimated component, or -1
};

struct RecoveryResult {
  std::string dataset_id;
  IblmmModel true_model;
  int initial_m = 0;
  std::vector<ComponentEstimate> mean_estimates;  // one per true component
  std::map<int, int> selection_counts;            // surviving M -> runs (failed runs under 0)
  std::vector<RunOutcome> runs;
  int failed_runs = 0;
  int non_converged_runs = 0;

  [[nodiscard]] std::vector<std::vector<double>> traces() const {
    std::vector<std::vector<double>> out;
    for (const auto& r : runs) out.push_back(r.elbo_trace);
    return out;
  }
};

/// Σ relative errors over (α, u, v) between two components.
inline double relative_distance(const IblParams& truth, const IblParams& est) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < truth.dim(); ++i) d += std::abs(est.alpha[i] - truth.alpha[i]) / truth.alpha[i];
  d += std::abs(est.u - truth.u) / truth.u;
  d += std::abs(est.v - truth.v) / truth.v;
  return d;
}

/// Greedy one-to-one matching: repeatedly takes the closest remaining pair.
inline std::vector<int> match_components(const IblmmModel& truth, const IblmmModel& est) {
  struct Pair {
    double cost;
    std::size_t t, e;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t e = 0; e < est.size(); ++e) {
      pairs.push_back({relative_distance(truth.components[t], est.components[e]), t, e});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.cost < b.cost; });
  std::vector<int> match(truth.size(), -1);
  std::vector<bool> used(est.size(), false);
  for (const auto& p : pairs) {
    if (match[p.t] >= 0 || used[p.e]) continue;
    match[p.t] = static_cast<int>(p.e);
    used[p.e] = true;
  }
  return match;
}

namespace detail {

inline RunOutcome run_once(const BenchmarkSpec& spec, const std::vector<Eigen::Index>& counts, int initial_m,
                           int run) {
  RunOutcome out;
  out.run = run;
  out.seed = spec.seed + static_cast<std::uint64_t>(run);
  try {
    const Dataset data = sample_mixture_stratified(spec.true_model, counts, out.seed);
    FitConfig config = spec.fit;
    config.initial_m = initial_m;
    config.seed = out.seed;
    if (config.prior) config.prior = broadcast_prior(*config.prior, initial_m, data.dim());
    const FitReport report = fit(data.x, config);
    out.converged = report.converged;
    out.iterations = report.iterations;
    out.surviving_components = report.surviving_components;
    out.rejected_decrease = report.rejected_decrease;
    out.elbo_trace = report.elbo_trace;
    out.estimate = report.point_model;
    out.matching = match_components(spec.true_model, out.estimate);
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Fits `runs` stratified datasets and averages matched component estimates
/// over the runs that converged.
inline RecoveryResult run_recovery(const BenchmarkSpec& spec) {
  validate(spec);
  RecoveryResult res;
  res.dataset_id = spec.dataset_id;
  res.true_model = spec.true_model;
  res.initial_m = spec.effective_initial_m();
  const auto dim = spec.true_model.dim();
  res.mean_estimates.assign(spec.true_model.size(), ComponentEstimate{Eigen::VectorXd::Zero(dim)});

  for (int run = 0; run < spec.runs; ++run) {
    RunOutcome out = detail::run_once(spec, spec.per_component_counts, res.initial_m, run);
    if (out.failed) {
      ++res.failed_runs;
      ++res.selection_counts[0];
    } else {
      ++res.selection_counts[out.surviving_components];
      if (!out.converged) {
        ++res.non_converged_runs;
      } else {
        for (std::size_t t = 0; t < out.matching.size(); ++t) {
          if (out.matching[t] < 0) continue;
          const auto e = static_cast<std::size_t>(out.matching[t]);
          auto& acc = res.mean_estimates[t];
          acc.alpha += out.estimate.components[e].alpha;
          acc.u += out.estimate.components[e].u;
          acc.v += out.estimate.components[e].v;
          acc.pi += out.estimate.weights[e];
          ++acc.matched_runs;
        }
      }
    }
    res.runs.push_back(std::move(out));
  }
  for (auto& acc : res.mean_estimates) {
    if (acc.matched_runs == 0) continue;
    const double k = acc.matched_runs;
    acc.alpha /= k;
    acc.u /= k;
    acc.v /= k;
    acc.pi /= k;
  }
  return res;
}

struct SelectionCell {
  Eigen::Index n = 0;
  int initial_m = 0;
  std::map<int, int> histogram;  // surviving M -> runs (failed runs under 0)

  [[nodiscard]] int runs() const {
    int total = 0;
    for (const auto& [m, c] : histogram) total += c;
    return total;
  }
  /// Most frequent surviving M; ties go to the smaller M.
  [[nodiscard]] int mode() const {
    int best = 0;
    int best_count = -1;
    for (const auto& [m, c] : histogram) {
      if (c > best_count) {
        best = m;
        best_count = c;
      }
    }
    return best;
  }
  /// Standard deviation of the surviving M over runs.
  [[nodiscard]] double spread() const {
    const double total = runs();
    if (total == 0) return 0.0;
    double mean = 0.0;
    for (const auto& [m, c] : histogram) mean += m * c;
    mean /= total;
    double var = 0.0;
    for (const auto& [m, c] : histogram) var += c * (m - mean) * (m - mean);
    return std::sqrt(var / total);
  }
};

struct SelectionResult {
  std::string dataset_id;
  int runs = 0;
  std::vector<SelectionCell> cells;
};

/// Surviving-component histograms over a grid of sample sizes and initial M.
/// Each sample size is split across components in proportion to the true weights.
inline SelectionResult run_model_selection(const BenchmarkSpec& spec, const std::vector<Eigen::Index>& sample_sizes,
                                           const std::vector<int>& initial_ms) {
  validate(spec);
  SelectionResult res;
  res.dataset_id = spec.dataset_id;
  res.runs = spec.runs;
  for (Eigen::Index n : sample_sizes) {
    if (n < 1) throw std::invalid_argument("sample sizes must be positive");
    const auto counts = proportional_counts(spec.true_model.weights, n);
    for (int m0 : initial_ms) {
      if (m0 < 1) throw std::invalid_argument("initial_M values must be >= 1");
      SelectionCell cell;
      cell.n = n;
      cell.initial_m = m0;
      for (int run = 0; run < spec.runs; ++run) {
        const RunOutcome out = detail::run_once(spec, counts, m0, run);
        ++cell.histogram[out.failed ? 0 : out.surviving_components];
      }
      res.cells.push_back(std::move(cell));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const RecoveryResult& res) {
  nlohmann::json means = nlohmann::json::array();
  for (const auto& e : res.mean_estimates) {
    means.push_back({{"alpha", to_json(e.alpha)}, {"u", e.u}, {"v", e.v}, {"pi", e.pi}, {"matched_runs", e.matched_runs}});
  }
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [m, c] : res.selection_counts) hist[std::to_string(m)] = c;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : res.runs) {
    nlohmann::json j = {{"run", r.run},        {"seed", r.seed},
                        {"failed", r.failed},  {"converged", r.converged},
                        {"iterations", r.iterations}, {"surviving_components", r.surviving_components},
                        {"rejected_decrease", r.rejected_decrease}};
    if (r.failed) {
      j["error"] = r.error;
    } else {
      j["matching"] = r.matching;
      j["model"] = to_json(r.estimate);
    }
    runs.push_back(std::move(j));
  }
  return {{"dataset", res.dataset_id},
          {"initial_m", res.initial_m},
          {"true_model", to_json(res.true_model)},
          {"mean_estimates", means},
          {"selection_counts", hist},
          {"failed_runs", res.failed_runs},
          {"non_converged_runs", res.non_converged_runs},
          {"runs", runs}};
}

inline nlohmann::json to_json(const SelectionResult& res) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : res.cells) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [m, k] : c.histogram) hist[std::to_string(m)] = k;
    cells.push_back({{"n", c.n}, {"initial_m", c.initial_m}, {"histogram", hist}, {"mode", c.mode()},
                     {"spread", c.spread()}});
  }
  return {{"dataset", res.dataset_id}, {"runs", res.runs}, {"cells", cells}};
}

/// Writes `<dir>/<id>/run_<k>_trace.csv`, `<id>/recovery.json` and, when
/// given, `<id>/selection.json`.
inline void emit_traces(const RecoveryResult& res, const std::optional<SelectionResult>& selection,
                        const std::filesystem::path& dir) {
  if (res.runs.empty()) throw std::invalid_argument("emit_traces: no results to write");
  const auto base = dir / res.dataset_id;
  std::filesystem::create_directories(base);
  for (const auto& r : res.runs) {
    auto out = detail::open_output(base / ("run_" + std::to_string(r.run) + "_trace.csv"));
    out << "iteration,elbo\n";
    for (std::size_t i = 0; i < r.elbo_trace.size(); ++i) out << i << "," << format_double(r.elbo_trace[i]) << "\n";
  }
  write_json(base / "recovery.json", to_json(res));
  if (selection) write_json(base / "selection.json", to_json(*selection));
}

}  // namespace iblmm
