// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "cropdg/benchmark.hpp"
#include "cropdg/error.hpp"
#include "cropdg/toydata.hpp"
#include "test_support.hpp"

using namespace cropdg;
using namespace cropdg::testing;

namespace {

std::vector<BenchmarkResult> fixture() {
  return {{"a", "x", 0, 0.50, false, {}}, {"a", "x", 1, 0.60, false, {}}, {"a", "x", 2, 0.70, false, {}},
          {"a", "y", 0, 0.20, false, {}}, {"a", "y", 1, 0.40, false, {}}, {"b", "x", 0, 0.90, false, {}},
          {"b", "x", 1, 0.80, false, {}}, {"b", "y", 0, 0.10, false, {}}, {"b", "y", 1, 0.30, false, {}},
          {"b", "y", 2, 0.50, false, {}}};
}

Predictor constant(double logit) {
  return [logit](const torch::Tensor& x) { return torch::full({x.size(0), 1, x.size(2), x.size(3)}, logit); };
}

class BenchmarkGrid : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = generate_toy_manifest(small_toy_specs(6, 32, 3), dir_.path() / "data", 2);
    for (const auto& d : manifest_.domains) spec_.domains.push_back(d.name);
    spec_.name = "unit";
    spec_.seeds = {0, 1};
    spec_.methods = {method_from_name("erm")};
    spec_.results_root = dir_.path() / "results";
    pre_.output_width = pre_.output_height = 32;
  }

  TempDir dir_{"bench"};
  DatasetManifest manifest_;
  BenchmarkSpec spec_;
  AugmentConfig pre_;
};

}  // namespace

TEST(Aggregate, HandComputedFixture) {
  const auto t = aggregate(fixture(), {"y", "x"});
  EXPECT_EQ(t.targets, (std::vector<std::string>{"y", "x"}));
  EXPECT_EQ(t.methods, (std::vector<std::string>{"a", "b"}));
  EXPECT_NEAR(t.cells.at({"a", "x"}).mean, 0.6, 1e-12);
  EXPECT_NEAR(t.cells.at({"a", "x"}).stddev, 0.1, 1e-12);
  EXPECT_NEAR(t.cells.at({"b", "y"}).stddev, 0.2, 1e-12);
  EXPECT_NEAR(t.average.at("a").first, 0.45, 1e-12);
  EXPECT_NEAR(t.average.at("b").second, (0.070710678118654752 + 0.2) / 2, 1e-12);
  EXPECT_TRUE(t.warnings.empty());
}

TEST(Aggregate, SingleSeedWarnsAndFailuresCounted) {
  std::vector<BenchmarkResult> r{{"m", "x", 0, 0.4, false, {}}, {"m", "x", 1, 0.0, true, "boom"}};
  const auto t = aggregate(r);
  EXPECT_EQ(t.cells.at({"m", "x"}).n, 1);
  EXPECT_TRUE(t.cells.at({"m", "x"}).single_seed);
  EXPECT_EQ(t.cells.at({"m", "x"}).stddev, 0.0);
  EXPECT_EQ(t.failed_results, 1);
  EXPECT_FALSE(t.warnings.empty());
}

TEST(Aggregate, FormatsHighlightBestAndSecond) {
  auto rows = fixture();
  rows.push_back({"c", "x", 0, 0.1, false, {}});
  rows.push_back({"c", "y", 0, 0.1, false, {}});
  const auto t = aggregate(rows, {"x", "y"});
  const auto md = format_table(t);
  EXPECT_NE(md.find("**85.00 ± 7.07**"), std::string::npos);
  EXPECT_NE(md.find("_60.00 ± 10.00_"), std::string::npos);
  const auto csv = format_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,x mean,x std,y mean,y std,Average mean,Average std");
  EXPECT_NE(csv.find("a,60.00,10.00,30.00,14.14,45.00,"), std::string::npos);
  EXPECT_EQ(format_table(aggregate(fixture(), {"x", "y"})).find("_60.00"), std::string::npos);
}

TEST(Results, CellPathAndRoundTrip) {
  TempDir dir("cells");
  const auto p = cell_path(dir.path(), "b", "erm", "maize", 3);
  EXPECT_EQ(p, dir.path() / "b" / "erm" / "maize" / "3.json");
  const BenchmarkResult ok{"erm", "maize", 3, 0.25, false, {}};
  write_result(p, ok);
  EXPECT_EQ(read_result(p), ok);
  const BenchmarkResult bad{"erm", "lettuce", 3, 0.0, true, "diverged"};
  write_result(cell_path(dir.path(), "b", "erm", "lettuce", 3), bad);
  EXPECT_EQ(load_results(dir.path(), "b").size(), 2u);
  std::ofstream(dir.path() / "junk.json") << "{\"method\": 1}";
  EXPECT_THROW(read_result(dir.path() / "junk.json"), Error);
}

TEST(Spec, Validation) {
  BenchmarkSpec s;
  s.domains = {"a", "b"};
  s.seeds = {0};
  s.methods = {method_from_name("erm")};
  EXPECT_NO_THROW(s.validate());
  auto t = s;
  t.seeds.clear();
  EXPECT_THROW(t.validate(), ConfigError);
  t = s;
  t.mode = BenchmarkMode::fixed_sources;
  EXPECT_THROW(t.validate(), ConfigError);
  t.extra_targets = {"a"};
  EXPECT_THROW(t.validate(), ConfigError);
  t = s;
  t.shard_index = 2;
  t.shard_count = 2;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_EQ(parse_benchmark_mode("fixed_sources"), BenchmarkMode::fixed_sources);
  EXPECT_THROW(parse_benchmark_mode("x"), ConfigError);
}

TEST_F(BenchmarkGrid, RunsOnceAndResumes) {
  int calls = 0;
  std::set<std::string> seen_sources;
  const CellTrainer trainer = [&](const MethodConfig&, const DGTask& task, std::uint64_t) {
    ++calls;
    for (const auto& s : task.sources) EXPECT_NE(s.name(), task.target.name());
    return constant(5.0);
  };
  const auto first = run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{});
  EXPECT_EQ(first.results.size(), 6u);
  EXPECT_EQ(first.trainings, 6);
  EXPECT_TRUE(first.complete());
  for (const auto& r : first.results) {
    EXPECT_GT(r.iou, 0.0);
    EXPECT_LT(r.iou, 1.0);
  }
  const auto second = run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{});
  EXPECT_EQ(second.trainings, 0);
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(second.results, first.results);
}

TEST_F(BenchmarkGrid, FailureMarkersAndRetry) {
  const std::string bad = spec_.domains[1];
  const CellTrainer flaky = [&](const MethodConfig&, const DGTask& task, std::uint64_t) -> Predictor {
    if (task.target.name() == bad) throw DivergenceError("loss is nan");
    return constant(-5.0);
  };
  const auto run = run_benchmark(manifest_, spec_, flaky, pre_, IoUConfig{});
  EXPECT_EQ(run.failed_cells, 2);
  EXPECT_FALSE(run.complete());
  const auto marker = read_result(cell_path(spec_.results_root, spec_.name, "erm", bad, 0));
  EXPECT_TRUE(marker.failed);
  EXPECT_NE(marker.error.find("nan"), std::string::npos);
  int calls = 0;
  const CellTrainer fixed = [&](const MethodConfig&, const DGTask&, std::uint64_t) {
    ++calls;
    return constant(-5.0);
  };
  const auto retry = run_benchmark(manifest_, spec_, fixed, pre_, IoUConfig{});
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(retry.complete());
  for (const auto& r : retry.results) EXPECT_EQ(r.iou, 0.0);
}

TEST_F(BenchmarkGrid, ShardsPartitionTheGrid) {
  int calls = 0;
  const CellTrainer trainer = [&](const MethodConfig&, const DGTask&, std::uint64_t) {
    ++calls;
    return constant(5.0);
  };
  spec_.shard_count = 2;
  spec_.shard_index = 0;
  const auto a = run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{});
  EXPECT_GT(a.missing_cells, 0);
  spec_.shard_index = 1;
  run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{});
  EXPECT_EQ(calls, 6);
  spec_.shard_count = 1;
  spec_.shard_index = 0;
  EXPECT_TRUE(run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{}).complete());
  EXPECT_EQ(calls, 6);
}

TEST_F(BenchmarkGrid, FixedSourcesTargetsOnlyExtras) {
  spec_.mode = BenchmarkMode::fixed_sources;
  spec_.extra_targets = {spec_.domains.back()};
  spec_.domains.pop_back();
  const CellTrainer trainer = [&](const MethodConfig&, const DGTask& task, std::uint64_t) {
    EXPECT_EQ(task.sources.size(), 2u);
    return constant(5.0);
  };
  const auto run = run_benchmark(manifest_, spec_, trainer, pre_, IoUConfig{});
  EXPECT_EQ(run.results.size(), 2u);
  for (const auto& r : run.results) EXPECT_EQ(r.target_domain, spec_.extra_targets[0]);
}
