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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "iblmm/io.hpp"

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("iblmm_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

iblmm::IblmmModel dataset_a() {
  Eigen::VectorXd a1(2), a2(2);
  a1 << 12, 24;
  a2 << 21, 15;
  return {{0.4, 0.6}, {{a1, 8.5, 12.5}, {a2, 18, 5}}};
}

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.5, 0.0}) {
    EXPECT_EQ(std::stod(iblmm::format_double(v)), v) << iblmm::format_double(v);
  }
  EXPECT_EQ(iblmm::format_double(0.5), "0.5");
}

TEST(DatasetCsv, ReadsLabelledAndUnlabelled) {
  std::istringstream labelled("x1,x2,label\n0.5,1.5,0\n2,3,1\n\n");
  const auto a = iblmm::read_dataset_csv(labelled);
  EXPECT_EQ(a.size(), 2);
  EXPECT_EQ(a.dim(), 2);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.x(1, 1), 3.0);
  std::istringstream plain("a, b, c\n1, 2, 3\n");
  const auto b = iblmm::read_dataset_csv(plain);
  EXPECT_EQ(b.dim(), 3);
  EXPECT_FALSE(b.has_labels());
}

TEST(DatasetCsv, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(iblmm::read_dataset_csv(empty), iblmm::IoError);
  std::istringstream ragged("x1,x2\n1,2\n3\n");
  EXPECT_THROW(iblmm::read_dataset_csv(ragged), iblmm::IoError);
  std::istringstream word("x1,x2\n1,abc\n");
  EXPECT_THROW(iblmm::read_dataset_csv(word), iblmm::IoError);
  std::istringstream bad_label("x1,label\n1,0.5\n");
  EXPECT_THROW(iblmm::read_dataset_csv(bad_label), iblmm::IoError);
  EXPECT_THROW(iblmm::read_dataset_csv(fs::path("/nonexistent/file.csv")), iblmm::IoError);
}

TEST(DatasetCsv, WriteReadRoundTrip) {
  const auto data = iblmm::sample_mixture(dataset_a(), 50, 1);
  const auto path = temp_dir("roundtrip") / "sub" / "data.csv";
  iblmm::write_dataset_csv(path, data, 2);
  const auto back = iblmm::read_dataset_csv(path);
  EXPECT_TRUE((back.x.array() == data.x.array()).all());
  EXPECT_EQ(back.labels, data.labels);
}

TEST(ModelJson, RoundTrip) {
  const auto m = dataset_a();
  const auto back = iblmm::model_from_json(iblmm::to_json(m));
  EXPECT_EQ(back.weights, m.weights);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.components[1].alpha, m.components[1].alpha);
  EXPECT_EQ(back.components[0].v, 12.5);
  const auto path = temp_dir("model") / "model.json";
  iblmm::write_json(path, iblmm::to_json(m));
  EXPECT_EQ(iblmm::read_model_json(path).components[1].u, 18.0);
}

TEST(ModelJson, RejectsInvalidModels) {
  auto j = iblmm::to_json(dataset_a());
  j["weights"] = {0.5, 0.7};
  EXPECT_ANY_THROW(iblmm::model_from_json(j));
  auto k = iblmm::to_json(dataset_a());
  k.erase("components");
  EXPECT_ANY_THROW(iblmm::model_from_json(k));
}

TEST(Config, KeyValuesWithComments) {
  std::istringstream in("# header\ninitial_m = 7\n\nprior.c = 0.01  # tighter\n");
  const auto kv = iblmm::read_key_values(in);
  ASSERT_EQ(kv.size(), 2u);
  iblmm::FitConfig cfg;
  iblmm::apply_fit_config(kv, cfg, 2);
  EXPECT_EQ(cfg.initial_m, 7);
  ASSERT_TRUE(cfg.prior.has_value());
  EXPECT_EQ(cfg.prior->components(), 7);
  EXPECT_TRUE((cfg.prior->c.array() == 0.01).all());
  EXPECT_TRUE((cfg.prior->g.array() == 1.0).all());
}

TEST(Config, Errors) {
  std::istringstream no_eq("initial_m 7\n");
  EXPECT_THROW(iblmm::read_key_values(no_eq), iblmm::IoError);
  iblmm::FitConfig cfg;
  EXPECT_THROW(iblmm::apply_fit_config({{"bogus", "1"}}, cfg, 2), iblmm::IoError);
  EXPECT_THROW(iblmm::apply_fit_config({{"prior.z", "1"}}, cfg, 2), iblmm::IoError);
  EXPECT_ANY_THROW(iblmm::apply_fit_config({{"prior.h", "-1"}}, cfg, 2));
  EXPECT_THROW(iblmm::apply_fit_config({{"initial_m", "0"}}, cfg, 2), std::invalid_argument);
}

TEST(Config, JsonEchoReadsBack) {
  iblmm::FitConfig cfg;
  cfg.initial_m = 6;
  cfg.max_iterations = 77;
  cfg.prune_threshold = 1e-4;
  cfg.prune_every_iteration = true;
  const auto dir = temp_dir("config");
  iblmm::write_json(dir / "config.json", {{"command", "fit"}, {"fit", iblmm::to_json(cfg, 2)}});
  iblmm::FitConfig back;
  iblmm::apply_fit_config(iblmm::read_config_file(dir / "config.json"), back, 2);
  EXPECT_EQ(iblmm::to_json(back, 2), iblmm::to_json(cfg, 2));

  std::ofstream(dir / "plain.cfg") << "max_iterations = 12\n";
  iblmm::FitConfig plain;
  iblmm::apply_fit_config(iblmm::read_config_file(dir / "plain.cfg"), plain, 2);
  EXPECT_EQ(plain.max_iterations, 12);

  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(iblmm::read_config_file(dir / "broken.json"), iblmm::IoError);
}

TEST(FitReportJson, CarriesModelAndTrace) {
  iblmm::FitReport r;
  r.elbo_trace = {-10.0, -5.0};
  r.iterations = 1;
  r.converged = true;
  r.surviving_components = 2;
  r.point_model = dataset_a();
  const auto j = iblmm::to_json(r);
  EXPECT_EQ(j.at("elbo_trace").size(), 2u);
  EXPECT_TRUE(j.at("converged").get<bool>());
  EXPECT_EQ(iblmm::model_from_json(j.at("model")).size(), 2u);
}

}  // namespace
