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
#include <sstream>

#include "cropdg/cli/commands.hpp"
#include "cropdg/cli/experiment.hpp"
#include "cropdg/cli/report.hpp"
#include "cropdg/error.hpp"
#include "test_support.hpp"

using namespace cropdg;
using namespace cropdg::cli;
using namespace cropdg::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "cropdg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    ExperimentConfig c;
    c.dataset_root = (dir_.path() / "data").string();
    c.output_dir = (dir_.path() / "run").string();
    c.seeds = {0};
    c.train = toy_train_config(32, 1, 4);
    c.toy.domains = small_toy_specs(6, 32, 3);
    config_ = dir_.path() / "cfg.json";
    std::ofstream(config_) << to_json(c).dump(2);
    ASSERT_EQ(run({"-c", config_.string(), "make-toy"}).code, 0);
  }

  std::vector<std::string> with_config(std::vector<std::string> rest) const {
    rest.insert(rest.begin(), {"-c", config_.string()});
    return rest;
  }

  TempDir dir_{"cli"};
  fs::path config_;
};

}  // namespace

TEST(Experiment, JsonRoundTripAndStrictKeys) {
  ExperimentConfig c;
  c.domains = {"a", "b"};
  c.sweep.kd_weights = {0.01, 1};
  c.sweep.temperatures = {2};
  c.report.checkpoints = {{"erm", "x.pt"}};
  const auto back = experiment_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  auto j = to_json(c);
  j["unknown_key"] = 1;
  EXPECT_THROW(experiment_from_json(j), ConfigError);
  EXPECT_EQ(expanded_methods(c).size(), 4u);
  EXPECT_EQ(sweep_method_name(c.sweep, 0.01, 2), "ensemble_kd_lambda0.01_tau2");
}

TEST(Experiment, Defaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.train.epochs, 50);
  EXPECT_EQ(c.train.loss.kd_weight, 3.0);
  EXPECT_EQ(c.train.loss.temperature, 1.0);
  EXPECT_FALSE(c.train.model.pretrained);
}

TEST(Experiment, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(LookupError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(ShapeError("x")), kExitIntegrity);
  EXPECT_EQ(exit_code_for(ManifestError("x")), kExitIntegrity);
  EXPECT_EQ(exit_code_for(DivergenceError("x")), kExitDivergence);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
  EXPECT_EQ(parse_shard("2/3").index, 2);
  EXPECT_THROW(parse_shard("3/3"), ConfigError);
}

TEST(Report, PanelTilesAreExact) {
  const auto image = torch::rand({3, 8, 6});
  const auto p1 = torch::rand({8, 6});
  const auto p2 = torch::rand({8, 6});
  const auto panel = render_panel(image, {p1, p2});
  EXPECT_EQ(panel.sizes(), (std::vector<std::int64_t>{3, 8, 18}));
  for (int c = 0; c < 3; ++c) {
    EXPECT_TRUE(torch::equal(panel[c].narrow(1, 6, 6), p1));
    EXPECT_TRUE(torch::equal(panel[c].narrow(1, 12, 6), p2));
  }
}

TEST(Report, SweepTicksMatchGrid) {
  const std::vector<double> lambdas{0.001, 0.01, 0.1, 1, 3};
  const std::vector<double> taus{1, 2, 4};
  std::vector<SweepPoint> pts;
  for (double l : lambdas)
    for (double t : taus) pts.push_back({l, t, l * t / 20});
  const auto plot = sweep_plot(pts, SweepAxis::kd_weight, lambdas, taus);
  EXPECT_EQ(plot.x_ticks, lambdas);
  EXPECT_EQ(plot.series_values, taus);
  std::size_t ticks = 0;
  for (auto pos = plot.svg.find("class=\"xtick\""); pos != std::string::npos;
       pos = plot.svg.find("class=\"xtick\"", pos + 1))
    ++ticks;
  EXPECT_EQ(ticks, lambdas.size());
  const auto by_tau = sweep_plot(pts, SweepAxis::temperature, taus, lambdas);
  EXPECT_EQ(by_tau.x_ticks, taus);
}

TEST_F(CliRun, MakeToyIsIdempotent) {
  const auto again = run(with_config({"make-toy"}));
  EXPECT_EQ(again.code, 0);
  EXPECT_NE(again.out.find("unchanged"), std::string::npos);
  const auto h = tree_hash(dir_.path() / "data");
  EXPECT_EQ(run(with_config({"make-toy"})).code, 0);
  EXPECT_EQ(tree_hash(dir_.path() / "data"), h);
}

TEST_F(CliRun, MakeToyUnwritableLeavesNothing) {
  std::ofstream(dir_.path() / "file") << "x";
  const auto target = dir_.path() / "file" / "data";
  const auto r = run(with_config({"--dataset-root", target.string(), "make-toy"}));
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(fs::exists(target));
  for (const auto& e : fs::directory_iterator(dir_.path())) {
    EXPECT_EQ(e.path().filename().string().find("staging"), std::string::npos);
  }
}

TEST_F(CliRun, MakeToyRefusesForeignDirectory) {
  const auto foreign = dir_.path() / "foreign";
  fs::create_directories(foreign);
  std::ofstream(foreign / "keep.txt") << "mine";
  EXPECT_EQ(run(with_config({"--dataset-root", foreign.string(), "make-toy"})).code, kExitConfig);
  EXPECT_TRUE(fs::exists(foreign / "keep.txt"));
}

TEST_F(CliRun, TrainCachesTeachers) {
  const auto a = run(with_config({"train", "-m", "ensemble_kd", "-t", "grassland", "-s", "0"}));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("teachers: 2 trained, 0 from cache"), std::string::npos) << a.out;
  EXPECT_TRUE(fs::exists(dir_.path() / "run" / "checkpoints" / "ensemble_kd-to-grassland-seed0.pt"));
  EXPECT_TRUE(fs::exists(dir_.path() / "run" / "logs" / "ensemble_kd-to-grassland-seed0.jsonl"));
  const auto b = run(with_config({"train", "-m", "ensemble_kd", "-t", "lettuce", "-s", "0"}));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(b.out.find("teachers: 1 trained, 1 from cache"), std::string::npos) << b.out;
  std::size_t teachers = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_.path() / "run" / "checkpoints" / "teachers"))
    teachers += e.is_regular_file() ? 1 : 0;
  EXPECT_EQ(teachers, 3u);
}

TEST_F(CliRun, ExitCodes) {
  EXPECT_EQ(run({}).code, kExitConfig);
  EXPECT_EQ(run(with_config({"bogus"})).code, kExitConfig);
  EXPECT_EQ(run(with_config({"train", "-m", "nope"})).code, kExitConfig);
  EXPECT_EQ(run(with_config({"train", "-m", "erm", "-t", "missing_domain"})).code, kExitConfig);

  std::ofstream(dir_.path() / "bad.pt") << "garbage";
  EXPECT_EQ(run(with_config({"evaluate", "--checkpoint", (dir_.path() / "bad.pt").string(), "-d", "grassland"})).code,
            kExitIntegrity);

  auto j = Json::parse(std::ifstream(config_));
  j["train"]["lr_start"] = 1e30;
  j["train"]["lr_end"] = 1e29;
  j["output_dir"] = (dir_.path() / "diverge").string();
  const auto diverging = dir_.path() / "diverge.json";
  std::ofstream(diverging) << j.dump();
  EXPECT_EQ(run({"-c", diverging.string(), "train", "-m", "erm", "-t", "grassland"}).code, kExitDivergence);

  const auto partial = run(with_config({"benchmark", "--shard", "0/2"}));
  EXPECT_EQ(partial.code, kExitPartial) << partial.err;
}

TEST_F(CliRun, EvaluatePrintsJson) {
  ASSERT_EQ(run(with_config({"train", "-m", "erm", "-t", "grassland", "-s", "0"})).code, 0);
  const auto ckpt = dir_.path() / "run" / "checkpoints" / "erm-to-grassland-seed0.pt";
  const auto r = run(with_config({"evaluate", "--checkpoint", ckpt.string(), "-d", "grassland"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_GE(j.at("iou").get<double>(), 0.0);
  EXPECT_LE(j.at("iou").get<double>(), 1.0);
  EXPECT_EQ(run(with_config({"evaluate", "--checkpoint", ckpt.string(), "-d", "nowhere"})).code, kExitConfig);
}
