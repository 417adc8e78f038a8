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

// iblmm: fit, sample, bench and text subcommands.
//
// Exit status: 0 on success, 1 on any error, 2 when `fit` stops at the
// iteration cap without converging.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "iblmm/benchmark.hpp"
#include "iblmm/evi.hpp"
#include "iblmm/io.hpp"
#include "iblmm/mixture.hpp"
#include "iblmm/text.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::uint64_t seed = 1;
  std::string out = "out";
  int verbosity = 0;
};

// Fit flags shared by fit, bench and text. Only flags given on the command
// line override the config file.
struct FitFlags {
  std::string config_path;
  int initial_m = 15;
  int max_iterations = 500;
  double tolerance = 1e-6;
  double prune_threshold = 1e-5;
  bool prune_every_iteration = false;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App& app, bool with_initial_m = true) {
    app.add_option("--config", config_path, "key = value or JSON fit configuration")->check(CLI::ExistingFile);
    if (with_initial_m) options["initial_m"] = app.add_option("--initial-m", initial_m, "initial number of components");
    options["max_iterations"] = app.add_option("--max-iterations", max_iterations, "iteration cap");
    options["elbo_rel_tolerance"] = app.add_option("--tolerance", tolerance, "relative bound tolerance");
    options["prune_threshold"] = app.add_option("--prune-threshold", prune_threshold, "annihilation threshold");
    options["prune_every_iteration"] =
        app.add_flag("--prune-every-iteration", prune_every_iteration, "annihilate inside the loop");
  }

  [[nodiscard]] iblmm::FitConfig resolve(const Globals& g, Eigen::Index dim) const {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = iblmm::read_config_file(config_path);
    // A JSON echo carries a seed; the command-line seed always wins.
    kv.erase("seed");
    const auto given = [&](const char* key) {
      const auto it = options.find(key);
      return it != options.end() && it->second->count() > 0;
    };
    if (given("initial_m")) kv["initial_m"] = std::to_string(initial_m);
    if (given("max_iterations")) kv["max_iterations"] = std::to_string(max_iterations);
    if (given("elbo_rel_tolerance")) kv["elbo_rel_tolerance"] = iblmm::format_double(tolerance);
    if (given("prune_threshold")) kv["prune_threshold"] = iblmm::format_double(prune_threshold);
    if (given("prune_every_iteration")) kv["prune_every_iteration"] = prune_every_iteration ? "true" : "false";
    iblmm::FitConfig config;
    config.seed = g.seed;
    iblmm::apply_fit_config(kv, config, dim);
    return config;
  }
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbosity > 0) std::cerr << msg << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_fit(const Globals& g, const std::string& data_path, const FitFlags& flags) {
  const auto data = iblmm::read_dataset_csv(data_path);
  const auto config = flags.resolve(g, data.dim());
  iblmm::write_json(fs::path(g.out) / "config.json",
                    {{"command", "fit"}, {"data", data_path}, {"fit", iblmm::to_json(config, data.dim())}});
  log(g, "fitting " + std::to_string(data.size()) + " rows from initial_M = " + std::to_string(config.initial_m));
  const auto report = iblmm::fit(data.x, config);
  iblmm::write_json(fs::path(g.out) / "report.json", iblmm::to_json(report));
  iblmm::write_json(fs::path(g.out) / "model.json", iblmm::to_json(report.point_model));
  log(g, std::to_string(report.surviving_components) + " components after " + std::to_string(report.iterations) +
             " iterations");
  return report.converged ? 0 : 2;
}

int cmd_sample(const Globals& g, const std::string& model_path, Eigen::Index n, bool stratified,
               const std::string& output) {
  const auto model = iblmm::read_model_json(model_path);
  const fs::path csv = output.empty() ? fs::path(g.out) / "data.csv" : fs::path(output);
  iblmm::write_json(fs::path(g.out) / "config.json", {{"command", "sample"},
                                                       {"model", model_path},
                                                       {"n", n},
                                                       {"stratified", stratified},
                                                       {"seed", g.seed},
                                                       {"output", csv.string()}});
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  const auto data = stratified
                        ? iblmm::sample_mixture_stratified(model, iblmm::proportional_counts(model.weights, n), g.seed)
                        : iblmm::sample_mixture(model, n, g.seed);
  iblmm::write_dataset_csv(csv, data, model.dim());
  return 0;
}

struct BenchFlags {
  std::string id;
  int runs = 20;
  int initial_m = 0;
  std::string sizes;
  std::string initial_ms;
};

int cmd_bench(const Globals& g, const BenchFlags& b, const FitFlags& flags) {
  auto spec = iblmm::benchmark_spec(b.id);
  spec.runs = b.runs;
  spec.initial_m = b.initial_m;
  spec.seed = g.seed;
  spec.fit = flags.resolve(g, spec.true_model.dim());
  std::vector<Eigen::Index> sizes;
  std::vector<int> ms;
  for (const auto& s : split_list(b.sizes)) sizes.push_back(std::stol(s));
  for (const auto& s : split_list(b.initial_ms)) ms.push_back(std::stoi(s));
  iblmm::write_json(fs::path(g.out) / b.id / "config.json",
                    {{"command", "bench"},
                     {"dataset", b.id},
                     {"runs", spec.runs},
                     {"initial_m", spec.effective_initial_m()},
                     {"seed", spec.seed},
                     {"selection_sizes", sizes},
                     {"selection_initial_m", ms},
                     {"fit", iblmm::to_json(spec.fit, spec.true_model.dim())}});

  log(g, "recovery: dataset " + b.id + ", " + std::to_string(spec.runs) + " runs");
  const auto recovery = iblmm::run_recovery(spec);
  iblmm::SelectionResult selection;
  if (sizes.empty() && ms.empty()) {
    // The recovery runs themselves form a single selection cell.
    selection.dataset_id = spec.dataset_id;
    selection.runs = spec.runs;
    selection.cells.push_back({spec.total_count(), spec.effective_initial_m(), recovery.selection_counts});
  } else {
    if (sizes.empty()) sizes.push_back(spec.total_count());
    if (ms.empty()) ms.push_back(spec.effective_initial_m());
    log(g, "model selection grid: " + std::to_string(sizes.size() * ms.size()) + " cells");
    selection = iblmm::run_model_selection(spec, sizes, ms);
  }
  iblmm::emit_traces(recovery, selection, g.out);
  return recovery.failed_runs == 0 ? 0 : 1;
}

struct TextFlags {
  std::string corpus;
  std::string test;
  int splits = 30;
  iblmm::FeatureOptions features;
};

int cmd_text(const Globals& g, const TextFlags& t, const FitFlags& flags) {
  const auto corpus = iblmm::read_corpus(t.corpus);
  iblmm::require_categories(corpus);
  iblmm::TextConfig config;
  config.features = t.features;
  config.splits = t.test.empty() ? t.splits : 1;
  config.seed = g.seed;
  config.fit = flags.resolve(g, 1);
  iblmm::write_json(fs::path(g.out) / "config.json",
                    {{"command", "text"},
                     {"corpus", t.corpus},
                     {"test", t.test},
                     {"splits", config.splits},
                     {"seed", config.seed},
                     {"features",
                      {{"min_count", t.features.min_count},
                       {"min_length", t.features.min_length},
                       {"smoothing", t.features.smoothing},
                       {"top_k", t.features.top_k}}},
                     {"fit", iblmm::to_json(config.fit, 1)}});

  iblmm::TextReport report;
  if (t.test.empty()) {
    log(g, std::to_string(config.splits) + " random half splits over " + std::to_string(corpus.size()) + " documents");
    report = iblmm::run_random_splits(corpus, config);
  } else {
    const auto test = iblmm::read_corpus(t.test);
    std::vector<std::vector<std::string>> train_docs, test_docs;
    std::vector<int> train_labels, test_labels;
    for (const auto& d : corpus.documents) {
      train_docs.push_back(iblmm::tokenize_and_stem(d.text));
      train_labels.push_back(d.label);
    }
    for (const auto& d : test.documents) {
      test_docs.push_back(iblmm::tokenize_and_stem(d.text));
      test_labels.push_back(d.label);
    }
    if (test.categories != corpus.categories) throw std::invalid_argument("train and test categories differ");
    const auto trained = iblmm::train_pipeline(train_docs, train_labels, corpus.categories, config);
    const auto ev = iblmm::evaluate(iblmm::vectorize_all(test_docs, trained.space), test_labels, trained.classifier);
    report.categories = corpus.categories;
    report.splits.push_back({0, ev.accuracy, trained.space.dim(), ev.confusion, trained.classifier.adjustments});
    iblmm::write_json(fs::path(g.out) / "feature_space.json", iblmm::to_json(trained.space));
    iblmm::write_json(fs::path(g.out) / "classifier.json", iblmm::to_json(trained.classifier));
  }
  iblmm::write_json(fs::path(g.out) / "report.json", iblmm::to_json(report));
  std::cout << "mean accuracy " << iblmm::format_double(report.mean_accuracy()) << " over " << report.splits.size()
            << " split(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverted Beta-Liouville mixture models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbosity, "log progress to stderr");

  std::string data_path;
  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "fit a mixture to a dataset CSV");
  fit->add_option("data", data_path, "dataset CSV")->required();
  fit_flags.add(*fit);

  std::string model_path;
  std::string sample_output;
  Eigen::Index n = 0;
  bool stratified = false;
  auto* sample = app.add_subcommand("sample", "draw a dataset from a model JSON");
  sample->add_option("model", model_path, "model JSON")->required();
  sample->add_option("-n,--n", n, "number of rows")->required();
  sample->add_flag("--stratified", stratified, "fixed per-component counts in proportion to the weights");
  sample->add_option("-o,--output", sample_output, "CSV path (default <out>/data.csv)");

  BenchFlags bench_flags;
  FitFlags bench_fit;
  auto* bench = app.add_subcommand("bench", "synthetic benchmark on dataset A, B, C or D");
  bench->add_option("dataset", bench_flags.id, "dataset id")->required();
  bench->add_option("--runs", bench_flags.runs, "runs per setting")->capture_default_str();
  bench->add_option("--initial-m", bench_flags.initial_m, "initial components (default twice the truth)");
  bench->add_option("--sizes", bench_flags.sizes, "comma-separated sample sizes for the selection grid");
  bench->add_option("--initial-ms", bench_flags.initial_ms, "comma-separated initial_M values for the selection grid");
  bench_fit.add(*bench, false);

  TextFlags text_flags;
  FitFlags text_fit;
  auto* text = app.add_subcommand("text", "train and evaluate per-category mixtures on a corpus");
  text->add_option("corpus", text_flags.corpus, "directory per category, or a (label, text) CSV")->required();
  text->add_option("--test", text_flags.test, "held-out corpus (disables random splits)");
  text->add_option("--splits", text_flags.splits, "random half splits")->capture_default_str();
  text->add_option("--min-count", text_flags.features.min_count, "minimum corpus count of a term")
      ->capture_default_str();
  text->add_option("--min-length", text_flags.features.min_length, "minimum term length")->capture_default_str();
  text->add_option("--smoothing", text_flags.features.smoothing, "added to every term count")->capture_default_str();
  text->add_option("--top-k", text_flags.features.top_k, "keep the K most frequent terms (0 keeps all)")
      ->capture_default_str();
  text_fit.add(*text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(g, data_path, fit_flags);
    if (*sample) return cmd_sample(g, model_path, n, stratified, sample_output);
    if (*bench) return cmd_bench(g, bench_flags, bench_fit);
    if (*text) return cmd_text(g, text_flags, text_fit);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
