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

// Bag-of-words text categorization with one mixture per category.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "iblmm/evi.hpp"
#include "iblmm/io.hpp"
#include "iblmm/math.hpp"
#include "iblmm/mixture.hpp"
#include "iblmm/porter.hpp"

namespace iblmm {

struct Document {
  std::string text;
  int label = 0;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<std::string> categories;

  [[nodiscard]] std::size_t size() const noexcept { return documents.size(); }
};

inline void validate(const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    const int label = corpus.documents[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= corpus.categories.size()) {
      throw std::invalid_argument("document " + std::to_string(i) + " has label " + std::to_string(label) +
                                  " outside the " + std::to_string(corpus.categories.size()) + " categories");
    }
  }
}

/// Lowercase alphabetic runs, each reduced by the Porter stemmer.
inline std::vector<std::string> tokenize_and_stem(std::string_view text) {
  std::vector<std::string> out;
  PorterStemmer stem;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(stem(word));
    word.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (uc < 128 && std::isalpha(uc)) {
      word.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

struct FeatureSpace {
  std::vector<std::string> vocabulary;  // sorted, unique
  int min_count = 3;
  int min_length = 2;
  double smoothing = 0.5;
  int top_k = 0;  // 0 keeps every qualifying term

  [[nodiscard]] Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(vocabulary.size()); }

  /// Column of a term, or -1.
  [[nodiscard]] Eigen::Index index_of(const std::string& term) const {
    const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
    return it != vocabulary.end() && *it == term ? static_cast<Eigen::Index>(it - vocabulary.begin()) : -1;
  }
};

struct FeatureOptions {
  int min_count = 3;
  int min_length = 2;
  double smoothing = 0.5;
  int top_k = 0;
};

/// Vocabulary of stems with corpus-wide count >= min_count and length >=
/// min_length. With top_k > 0 only the most frequent terms are kept
/// (ties broken alphabetically).
inline FeatureSpace build_feature_space(const std::vector<std::vector<std::string>>& documents,
                                        const FeatureOptions& options = {}) {
  if (documents.empty()) throw std::invalid_argument("build_feature_space: empty corpus");
  if (!(options.smoothing > 0.0)) throw std::invalid_argument("smoothing must be > 0");
  std::map<std::string, long> counts;
  for (const auto& doc : documents) {
    for (const auto& term : doc) ++counts[term];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [term, c] : counts) {
    if (c >= options.min_count && static_cast<int>(term.size()) >= options.min_length) kept.emplace_back(term, c);
  }
  if (options.top_k > 0 && static_cast<int>(kept.size()) > options.top_k) {
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    kept.resize(static_cast<std::size_t>(options.top_k));
  }
  FeatureSpace space{{}, options.min_count, options.min_length, options.smoothing, options.top_k};
  for (auto& [term, c] : kept) space.vocabulary.push_back(std::move(term));
  std::sort(space.vocabulary.begin(), space.vocabulary.end());
  if (space.vocabulary.empty()) throw std::invalid_argument("build_feature_space: no term passes the filters");
  return space;
}

/// Term counts plus the smoothing constant, so every entry is positive.
inline Eigen::VectorXd vectorize(const std::vector<std::string>& terms, const FeatureSpace& space) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(space.dim(), space.smoothing);
  for (const auto& t : terms) {
    if (const auto i = space.index_of(t); i >= 0) v[i] += 1.0;
  }
  return v;
}

inline Eigen::MatrixXd vectorize_all(const std::vector<std::vector<std::string>>& docs, const FeatureSpace& space) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(docs.size()), space.dim());
  for (std::size_t n = 0; n < docs.size(); ++n) x.row(static_cast<Eigen::Index>(n)) = vectorize(docs[n], space);
  return x;
}

struct Classifier {
  std::vector<std::string> categories;
  std::vector<IblmmModel> models;
  std::vector<double> class_priors;
  std::vector<int> initial_m;  // initial_M actually used per category
  std::vector<std::string> adjustments;

  [[nodiscard]] Eigen::Index dim() const { return models.empty() ? 0 : models.front().dim(); }
};

/// One mixture per category. A category with fewer documents than
/// initial_M is fitted with initial_M lowered to its document count.
inline Classifier train(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                        const std::vector<std::string>& categories, const FitConfig& config) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw std::invalid_argument("train: one label per row");
  const auto k = categories.size();
  std::vector<std::vector<Eigen::Index>> rows(k);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= k) throw std::invalid_argument("train: bad label");
    rows[static_cast<std::size_t>(labels[n])].push_back(static_cast<Eigen::Index>(n));
  }
  Classifier clf;
  clf.categories = categories;
  for (std::size_t c = 0; c < k; ++c) {
    if (rows[c].empty()) throw std::invalid_argument("train: category '" + categories[c] + "' has no documents");
    Eigen::MatrixXd xc(static_cast<Eigen::Index>(rows[c].size()), x.cols());
    for (std::size_t i = 0; i < rows[c].size(); ++i) xc.row(static_cast<Eigen::Index>(i)) = x.row(rows[c][i]);
    FitConfig cfg = config;
    if (cfg.initial_m > xc.rows()) {
      clf.adjustments.push_back("category '" + categories[c] + "': initial_M lowered from " +
                                std::to_string(cfg.initial_m) + " to " + std::to_string(xc.rows()));
      cfg.initial_m = static_cast<int>(xc.rows());
    }
    if (cfg.prior) cfg.prior = broadcast_prior(*cfg.prior, cfg.initial_m, xc.cols());
    clf.initial_m.push_back(cfg.initial_m);
    clf.models.push_back(fit(xc, cfg).point_model);
    clf.class_priors.push_back(static_cast<double>(rows[c].size()) / static_cast<double>(labels.size()));
  }
  return clf;
}

struct Classification {
  int category = 0;
  std::vector<double> posterior;
};

/// Bayes rule over categories; ties go to the lowest index.
inline Classification classify(const Eigen::VectorXd& v, const Classifier& clf) {
  if (v.size() != clf.dim()) {
    throw std::invalid_argument("classify: vector has dimension " + std::to_string(v.size()) + ", classifier " +
                                std::to_string(clf.dim()));
  }
  std::vector<double> score(clf.models.size());
  const Eigen::MatrixXd row = v.transpose();
  for (std::size_t c = 0; c < clf.models.size(); ++c) {
    score[c] = std::log(clf.class_priors[c]) + log_likelihood(row, clf.models[c]);
  }
  Classification out;
  out.category = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
  const double norm = log_sum_exp(score);
  out.posterior.resize(score.size());
  for (std::size_t c = 0; c < score.size(); ++c) out.posterior[c] = std::exp(score[c] - norm);
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::vector<int> predictions;
};

inline Evaluation evaluate(const Eigen::MatrixXd& x, const std::vector<int>& labels, const Classifier& clf) {
  if (x.rows() == 0) throw std::invalid_argument("evaluate: empty test set");
  const auto k = clf.categories.size();
  Evaluation ev;
  ev.confusion.assign(k, std::vector<int>(k, 0));
  int correct = 0;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const int pred = classify(x.row(n).transpose(), clf).category;
    const int truth = labels[static_cast<std::size_t>(n)];
    ++ev.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
    ev.predictions.push_back(pred);
    correct += pred == truth ? 1 : 0;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(x.rows());
  return ev;
}

// ---------------------------------------------------------------------------
// Corpus loading

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// RFC 4180 records: quoted fields may hold commas, newlines and "" escapes.
inline std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      record.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(ch);
      any = true;
    }
  }
  if (quoted) throw IoError("unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

inline int category_index(std::vector<std::string>& categories, const std::string& name) {
  const auto it = std::find(categories.begin(), categories.end(), name);
  if (it != categories.end()) return static_cast<int>(it - categories.begin());
  categories.push_back(name);
  return static_cast<int>(categories.size() - 1);
}

/// Renumbers labels so categories are in lexicographic order.
inline void sort_categories(Corpus& corpus) {
  std::vector<std::string> sorted = corpus.categories;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> remap(corpus.categories.size());
  for (std::size_t i = 0; i < corpus.categories.size(); ++i) {
    remap[i] = static_cast<int>(std::find(sorted.begin(), sorted.end(), corpus.categories[i]) - sorted.begin());
  }
  for (auto& d : corpus.documents) d.label = remap[static_cast<std::size_t>(d.label)];
  corpus.categories = std::move(sorted);
}

}  // namespace detail

/// A CSV with a header row and (label, text) columns.
inline Corpus read_corpus_csv(const std::filesystem::path& path) {
  const auto records = detail::parse_csv_records(detail::read_file(path));
  if (records.empty()) throw IoError(path.string() + ": missing header row");
  Corpus corpus;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != 2) {
      throw IoError(path.string() + ": record " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                    " fields, expected 2");
    }
    corpus.documents.push_back({records[i][1], detail::category_index(corpus.categories, records[i][0])});
  }
  detail::sort_categories(corpus);
  return corpus;
}

/// One subdirectory per category, one document per regular file.
inline Corpus read_corpus_dir(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  Corpus corpus;
  for (const auto& dir : dirs) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const int label = static_cast<int>(corpus.categories.size());
    corpus.categories.push_back(dir.filename().string());
    for (const auto& f : files) corpus.documents.push_back({detail::read_file(f), label});
  }
  return corpus;
}

inline Corpus read_corpus(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return read_corpus_dir(path);
  if (!std::filesystem::exists(path)) throw IoError("cannot open " + path.string());
  return read_corpus_csv(path);
}

// ---------------------------------------------------------------------------
// Experiment protocol

struct TextConfig {
  FeatureOptions features;
  FitConfig fit;
  int splits = 30;
  std::uint64_t seed = 1;
};

struct SplitResult {
  int split = 0;
  double accuracy = 0.0;
  Eigen::Index vocabulary_size = 0;
  std::vector<std::vector<int>> confusion;
  std::vector<std::string> adjustments;
};

struct TextReport {
  std::vector<std::string> categories;
  std::vector<SplitResult> splits;

  [[nodiscard]] double mean_accuracy() const {
    if (splits.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : splits) total += s.accuracy;
    return total / static_cast<double>(splits.size());
  }
};

inline void require_categories(const Corpus& corpus) {
  validate(corpus);
  std::vector<int> present(corpus.categories.size(), 0);
  for (const auto& d : corpus.documents) present[static_cast<std::size_t>(d.label)] = 1;
  if (std::accumulate(present.begin(), present.end(), 0) < 2) {
    throw std::invalid_argument("need >= 2 categories");
  }
}

struct TrainedPipeline {
  FeatureSpace space;
  Classifier classifier;
};

inline TrainedPipeline train_pipeline(const std::vector<std::vector<std::string>>& docs, const std::vector<int>& labels,
                                      const std::vector<std::string>& categories, const TextConfig& config) {
  TrainedPipeline out;
  out.space = build_feature_space(docs, config.features);
  FitConfig fit_cfg = config.fit;
  fit_cfg.seed = config.seed;
  out.classifier = train(vectorize_all(docs, out.space), labels, categories, fit_cfg);
  return out;
}

namespace detail {

inline std::vector<std::vector<std::string>> tokenize_all(const Corpus& corpus) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus.documents) out.push_back(tokenize_and_stem(d.text));
  return out;
}

inline SplitResult run_split(const std::vector<std::vector<std::string>>& train_docs, const std::vector<int>& train_labels,
                             const std::vector<std::vector<std::string>>& test_docs, const std::vector<int>& test_labels,
                             const std::vector<std::string>& categories, const TextConfig& config) {
  const auto model = train_pipeline(train_docs, train_labels, categories, config);
  const auto ev = evaluate(vectorize_all(test_docs, model.space), test_labels, model.classifier);
  SplitResult res;
  res.accuracy = ev.accuracy;
  res.vocabulary_size = model.space.dim();
  res.confusion = ev.confusion;
  res.adjustments = model.classifier.adjustments;
  return res;
}

}  // namespace detail

/// Repeated random halving: each category's documents are shuffled and the
/// first half (rounded up) trains, the rest tests.
inline TextReport run_random_splits(const Corpus& corpus, const TextConfig& config) {
  require_categories(corpus);
  if (config.splits < 1) throw std::invalid_argument("splits must be >= 1");
  const auto tokens = detail::tokenize_all(corpus);
  std::vector<std::vector<std::size_t>> by_class(corpus.categories.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_class[static_cast<std::size_t>(corpus.documents[i].label)].push_back(i);
  }
  TextReport report;
  report.categories = corpus.categories;
  for (int s = 0; s < config.splits; ++s) {
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(s));
    std::vector<std::vector<std::string>> train_docs, test_docs;
    std::vector<int> train_labels, test_labels;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto idx = by_class[c];
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t half = (idx.size() + 1) / 2;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto& docs = i < half ? train_docs : test_docs;
        auto& labels = i < half ? train_labels : test_labels;
        docs.push_back(tokens[idx[i]]);
        labels.push_back(static_cast<int>(c));
      }
    }
    TextConfig split_cfg = config;
    split_cfg.seed = config.seed + static_cast<std::uint64_t>(s);
    auto res = detail::run_split(train_docs, train_labels, test_docs, test_labels, corpus.categories, split_cfg);
    res.split = s;
    report.splits.push_back(std::move(res));
  }
  return report;
}

/// Trains on one corpus and tests on another with the same categories.
inline TextReport run_train_test(const Corpus& train_corpus, const Corpus& test_corpus, const TextConfig& config) {
  require_categories(train_corpus);
  validate(test_corpus);
  if (test_corpus.categories != train_corpus.categories) {
    throw std::invalid_argument("train and test corpora have different categories");
  }
  std::vector<int> train_labels, test_labels;
  for (const auto& d : train_corpus.documents) train_labels.push_back(d.label);
  for (const auto& d : test_corpus.documents) test_labels.push_back(d.label);
  TextReport report;
  report.categories = train_corpus.categories;
  report.splits.push_back(detail::run_split(detail::tokenize_all(train_corpus), train_labels,
                                            detail::tokenize_all(test_corpus), test_labels, train_corpus.categories,
                                            config));
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const FeatureSpace& space) {
  return {{"vocabulary", space.vocabulary},
          {"min_count", space.min_count},
          {"min_length", space.min_length},
          {"smoothing", space.smoothing},
          {"top_k", space.top_k}};
}

inline FeatureSpace feature_space_from_json(const nlohmann::json& j) {
  FeatureSpace space;
  space.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  space.min_count = j.at("min_count").get<int>();
  space.min_length = j.at("min_length").get<int>();
  space.smoothing = j.at("smoothing").get<double>();
  space.top_k = j.value("top_k", 0);
  if (!std::is_sorted(space.vocabulary.begin(), space.vocabulary.end())) {
    throw IoError("feature space vocabulary is not sorted");
  }
  return space;
}

inline nlohmann::json to_json(const Classifier& clf) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : clf.models) models.push_back(to_json(m));
  return {{"categories", clf.categories},
          {"class_priors", clf.class_priors},
          {"initial_m", clf.initial_m},
          {"adjustments", clf.adjustments},
          {"models", models}};
}

inline Classifier classifier_from_json(const nlohmann::json& j) {
  Classifier clf;
  clf.categories = j.at("categories").get<std::vector<std::string>>();
  clf.class_priors = j.at("class_priors").get<std::vector<double>>();
  clf.initial_m = j.value("initial_m", std::vector<int>{});
  clf.adjustments = j.value("adjustments", std::vector<std::string>{});
  for (const auto& m : j.at("models")) clf.models.push_back(model_from_json(m));
  return clf;
}

inline nlohmann::json to_json(const TextReport& report) {
  nlohmann::json splits = nlohmann::json::array();
  std::vector<double> accuracies;
  for (const auto& s : report.splits) {
    accuracies.push_back(s.accuracy);
    splits.push_back({{"split", s.split},
                      {"accuracy", s.accuracy},
                      {"vocabulary_size", s.vocabulary_size},
                      {"confusion", s.confusion},
                      {"adjustments", s.adjustments}});
  }
  return {{"categories", report.categories},
          {"mean_accuracy", report.mean_accuracy()},
          {"accuracies", accuracies},
          {"splits", splits}};
}

}  // namespace iblmm
