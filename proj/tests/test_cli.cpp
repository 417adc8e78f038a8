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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "iblmm/benchmark.hpp"
#include "iblmm/io.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;
};

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("iblmm_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the tool with stdout and stderr captured into `dir`/log.txt.
Result run(const fs::path& dir, const std::string& args) {
  const auto log = dir / "log.txt";
  const std::string cmd = std::string("\"") + IBLMM_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_model(const fs::path& dir) {
  const auto path = dir / "model.json";
  iblmm::write_json(path, iblmm::to_json(iblmm::benchmark_spec("A").true_model));
  return path;
}

TEST(Cli, SampleThenFit) {
  const auto dir = temp_dir("fit");
  const auto model = write_model(dir);
  auto r = run(dir, "sample " + model.string() + " -n 500 --stratified --seed 3 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto data = iblmm::read_dataset_csv(dir / "data.csv");
  EXPECT_EQ(data.size(), 500);
  EXPECT_EQ(std::count(data.labels.begin(), data.labels.end(), 0), 200);

  r = run(dir, "fit " + (dir / "data.csv").string() + " --initial-m 4 --out " + (dir / "fit").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(slurp(dir / "fit" / "report.json"));
  EXPECT_EQ(report.at("surviving_components").get<int>(), 2);
  EXPECT_EQ(iblmm::read_model_json(dir / "fit" / "model.json").size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "fit" / "config.json"));
}

TEST(Cli, ConfigEchoReproducesTheRun) {
  const auto dir = temp_dir("config");
  const auto model = write_model(dir);
  ASSERT_EQ(run(dir, "sample " + model.string() + " -n 300 -o " + (dir / "d.csv").string()).code, 0);
  const auto data = (dir / "d.csv").string();
  ASSERT_EQ(run(dir, "fit " + data + " --initial-m 3 --prune-threshold 1e-4 --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(dir, "fit " + data + " --config " + (dir / "a" / "config.json").string() + " --out " +
                         (dir / "b").string())
                .code,
            0);
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "config.json"), slurp(dir / "b" / "config.json"));
}

TEST(Cli, IterationCapExitsTwo) {
  const auto dir = temp_dir("cap");
  const auto model = write_model(dir);
  ASSERT_EQ(run(dir, "sample " + model.string() + " -n 300 -o " + (dir / "d.csv").string()).code, 0);
  const auto r = run(dir, "fit " + (dir / "d.csv").string() + " --initial-m 6 --max-iterations 1 --out " +
                              (dir / "out").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Cli, EmptySampleWritesHeaderOnly) {
  const auto dir = temp_dir("empty");
  const auto model = write_model(dir);
  ASSERT_EQ(run(dir, "sample " + model.string() + " -n 0 -o " + (dir / "d.csv").string()).code, 0);
  EXPECT_EQ(slurp(dir / "d.csv"), "x1,x2\n");
}

TEST(Cli, BenchIsDeterministic) {
  const auto dir = temp_dir("bench");
  ASSERT_EQ(run(dir, "bench A --runs 2 --initial-m 3 --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(dir, "bench A --runs 2 --initial-m 3 --out " + (dir / "b").string()).code, 0);
  for (const char* f : {"recovery.json", "selection.json", "run_0_trace.csv", "run_1_trace.csv", "config.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / "A" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / "A" / f), slurp(dir / "b" / "A" / f)) << f;
  }
}

TEST(Cli, ErrorsExitOne) {
  const auto dir = temp_dir("errors");
  auto r = run(dir, "fit " + (dir / "missing.csv").string());
  EXPECT_EQ(r.code, 1);
  r = run(dir, "bench E --out " + dir.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("unknown dataset id"), std::string::npos) << r.output;
  r = run(dir, "");
  EXPECT_EQ(r.code, 1);
  r = run(dir, "fit");
  EXPECT_EQ(r.code, 1);

  std::ofstream(dir / "one.csv") << "label,text\nonly,some words here\nonly,more words there\n";
  r = run(dir, "text " + (dir / "one.csv").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("need >= 2 categories"), std::string::npos) << r.output;

  std::ofstream(dir / "bad.csv") << "x1,x2\n1,-2\n3,4\n";
  r = run(dir, "fit " + (dir / "bad.csv").string() + " --initial-m 1 --out " + dir.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("row 0, column 1"), std::string::npos) << r.output;
}

TEST(Cli, TextTrainTestWritesModels) {
  const auto dir = temp_dir("text");
  const auto corpus = (fs::path(IBLMM_SOURCE_DIR) / "data" / "mini_corpus.csv").string();
  const auto r = run(dir, "text " + corpus + " --test " + corpus + " --initial-m 2 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_GE(report.at("mean_accuracy").get<double>(), 0.95);
  EXPECT_TRUE(fs::exists(dir / "feature_space.json"));
  EXPECT_TRUE(fs::exists(dir / "classifier.json"));
}

}  // namespace
