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

// Dataset CSV, model and report JSON, and key-value fit configuration files.

#pragma once

#include <Eigen/Core>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iblmm/evi.hpp"
#include "iblmm/mixture.hpp"

namespace iblmm {

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw IoError(where + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw IoError(where + ": not a number: '" + s + "'");
  return v;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Parses a dataset CSV: a header row, D numeric columns, and an optional
/// final integer column named "label".
inline Dataset read_dataset_csv(std::istream& in, const std::string& name = "dataset") {
  std::string line;
  if (!std::getline(in, line)) throw IoError(name + ": missing header row");
  const auto header = detail::split_csv_line(line);
  if (header.empty()) throw IoError(name + ": empty header row");
  const bool labelled = header.back() == "label";
  const std::size_t dim = header.size() - (labelled ? 1 : 0);
  if (dim == 0) throw IoError(name + ": no data columns");

  std::vector<std::vector<double>> rows;
  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw IoError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(cells.size()));
    }
    std::vector<double> row(dim);
    for (std::size_t d = 0; d < dim; ++d) row[d] = detail::parse_double(cells[d], where);
    rows.push_back(std::move(row));
    if (labelled) {
      const double lab = detail::parse_double(cells.back(), where);
      if (lab != static_cast<int>(lab) || lab < 0) throw IoError(where + ": label must be a non-negative integer");
      ds.labels.push_back(static_cast<int>(lab));
    }
  }
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t d = 0; d < dim; ++d) ds.x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) = rows[n][d];
  }
  return ds;
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_dataset_csv(in, path.string());
}

inline void write_dataset_csv(std::ostream& out, const Dataset& ds, Eigen::Index dim) {
  for (Eigen::Index d = 0; d < dim; ++d) out << (d ? "," : "") << "x" << (d + 1);
  if (ds.has_labels()) out << ",label";
  out << "\n";
  for (Eigen::Index n = 0; n < ds.size(); ++n) {
    for (Eigen::Index d = 0; d < dim; ++d) out << (d ? "," : "") << format_double(ds.x(n, d));
    if (ds.has_labels()) out << "," << ds.labels[static_cast<std::size_t>(n)];
    out << "\n";
  }
}

inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds, Eigen::Index dim) {
  auto out = detail::open_output(path);
  write_dataset_csv(out, ds, dim);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline nlohmann::json to_json(const IblmmModel& model) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : model.components) {
    comps.push_back({{"alpha", to_json(c.alpha)}, {"u", c.u}, {"v", c.v}});
  }
  return {{"weights", model.weights}, {"components", comps}};
}

inline IblmmModel model_from_json(const nlohmann::json& j) {
  try {
    IblmmModel model;
    model.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& c : j.at("components")) {
      const auto alpha = c.at("alpha").get<std::vector<double>>();
      model.components.push_back(
          IblParams{Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size())),
                    c.at("u").get<double>(), c.at("v").get<double>()});
    }
    validate(model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model JSON: ") + e.what());
  }
}

inline IblmmModel read_model_json(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = detail::open_output(path);
  out << j.dump(2) << "\n";
}

inline nlohmann::json to_json(const FitReport& report) {
  return {{"elbo_trace", report.elbo_trace},
          {"iterations", report.iterations},
          {"converged", report.converged},
          {"rejected_decrease", report.rejected_decrease},
          {"surviving_components", report.surviving_components},
          {"weights_before_pruning", report.weights_before_pruning},
          {"mass_before_pruning", report.mass_before_pruning},
          {"model", to_json(report.point_model)}};
}

// ---------------------------------------------------------------------------
// Key-value fit configuration

/// Reads `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_key_values(std::istream& in, const std::string& name = "config") {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(name + ":" + std::to_string(line_no) + ": expected key = value");
    }
    out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

/// Flattens a JSON object to key-value form; nested objects give dotted keys.
inline void flatten_json(const nlohmann::json& j, std::map<std::string, std::string>& out,
                         const std::string& prefix = "") {
  for (const auto& [key, value] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten_json(value, out, name);
    } else if (value.is_string()) {
      out[name] = value.get<std::string>();
    } else if (value.is_number_float()) {
      out[name] = format_double(value.get<double>());
    } else {
      out[name] = value.dump();
    }
  }
}

/// Reads a key-value file, or a JSON object when the first non-blank
/// character is '{'. A JSON object with a "fit" member contributes only that
/// member, so a configuration echoed by the command-line tool reads back.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  const std::string name = path.string();
  auto in = detail::open_input(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    std::map<std::string, std::string> out;
    try {
      const auto j = nlohmann::json::parse(text);
      flatten_json(j.contains("fit") && j["fit"].is_object() ? j["fit"] : j, out);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(name + ": " + e.what());
    }
    return out;
  }
  std::istringstream lines(text);
  return read_key_values(lines, name);
}

/// Overlays recognized keys onto `config`. Prior hyperparameters are given as
/// scalars (prior.g, prior.h, ...) and broadcast over every entry.
inline void apply_fit_config(const std::map<std::string, std::string>& kv, FitConfig& config, Eigen::Index dim) {
  std::map<std::string, double> prior_values;
  for (const auto& [key, value] : kv) {
    const std::string where = "config key '" + key + "'";
    if (key == "initial_m") {
      config.initial_m = static_cast<int>(detail::parse_double(value, where));
    } else if (key == "max_iterations") {
      config.max_iterations = static_cast<int>(detail::parse_double(value, where));
    } else if (key == "elbo_rel_tolerance") {
      config.elbo_rel_tolerance = detail::parse_double(value, where);
    } else if (key == "prune_threshold") {
      config.prune_threshold = detail::parse_double(value, where);
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "prune_every_iteration") {
      config.prune_every_iteration = value == "true" || value == "1";
    } else if (key.rfind("prior.", 0) == 0) {
      prior_values[key.substr(6)] = detail::parse_double(value, where);
    } else {
      throw IoError("unknown config key '" + key + "'");
    }
  }
  if (!prior_values.empty()) {
    PriorHyperparams prior = default_prior(config.initial_m, dim);
    for (const auto& [name, v] : prior_values) {
      if (name == "g") prior.g.setConstant(v);
      else if (name == "h") prior.h.setConstant(v);
      else if (name == "s") prior.s.setConstant(v);
      else if (name == "t") prior.t.setConstant(v);
      else if (name == "p") prior.p.setConstant(v);
      else if (name == "q") prior.q.setConstant(v);
      else if (name == "c") prior.c.setConstant(v);
      else throw IoError("unknown prior hyperparameter '" + name + "'");
    }
    validate(prior);
    config.prior = prior;
  }
  validate(config);
}

/// The effective configuration, with the prior spelled out by its scalars.
inline nlohmann::json to_json(const FitConfig& config, Eigen::Index dim) {
  const PriorHyperparams prior = config.prior ? *config.prior : default_prior(config.initial_m, dim);
  return {{"initial_m", config.initial_m},
          {"max_iterations", config.max_iterations},
          {"elbo_rel_tolerance", config.elbo_rel_tolerance},
          {"prune_threshold", config.prune_threshold},
          {"seed", config.seed},
          {"prune_every_iteration", config.prune_every_iteration},
          {"prior",
           {{"g", prior.g(0, 0)},
            {"h", prior.h(0, 0)},
            {"s", prior.s[0]},
            {"t", prior.t[0]},
            {"p", prior.p[0]},
            {"q", prior.q[0]},
            {"c", prior.c[0]}}}};
}

}  // namespace iblmm
