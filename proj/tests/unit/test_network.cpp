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

#include "cropdg/checkpoint.hpp"
#include "cropdg/error.hpp"
#include "cropdg/network.hpp"
#include "cropdg/norm_variants.hpp"
#include "test_support.hpp"

using namespace cropdg;
using namespace cropdg::testing;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model(std::int64_t size = 64) {
  ModelConfig cfg;
  cfg.backbone = Backbone::toy;
  cfg.input_width = cfg.input_height = size;
  return cfg;
}

}  // namespace

TEST(Network, ToyReductionFactors) {
  auto model = build_model(toy_model(), 0);
  const auto x = torch::randn({2, 3, 64, 64});
  const auto f = model->features(x);
  EXPECT_EQ(f.mid.size(2), 8);
  EXPECT_EQ(f.mid.size(3), 8);
  EXPECT_EQ(f.deep.size(2), 4);
  EXPECT_EQ(f.deep.size(3), 4);
  EXPECT_EQ(model->forward(x).sizes(), (std::vector<std::int64_t>{2, 1, 64, 64}));
  EXPECT_EQ(backbone_block_count(Backbone::toy), 5);
}

TEST(Network, StandardReductionFactors) {
  ModelConfig cfg;
  cfg.input_width = cfg.input_height = 224;
  auto model = build_model(cfg, 0);
  model->eval();
  torch::NoGradGuard guard;
  const auto f = model->features(torch::randn({1, 3, 224, 224}));
  EXPECT_EQ(f.mid.size(2), 28);
  EXPECT_EQ(f.deep.size(2), 14);
  EXPECT_EQ(f.deep.size(1), 960);
  EXPECT_EQ(backbone_block_count(Backbone::standard), 17);
}

TEST(Network, InputChecks) {
  auto model = build_model(toy_model(), 0);
  EXPECT_THROW(model->forward(torch::randn({1, 3, 60, 64})), ShapeError);
  EXPECT_THROW(model->forward(torch::randn({1, 4, 64, 64})), ShapeError);
  auto cfg = toy_model();
  cfg.pretrained = true;
  EXPECT_THROW(build_model(cfg, 0), ConfigError);
  cfg = toy_model();
  cfg.input_width = 50;
  EXPECT_THROW(cfg.validate(), ConfigError);
  ModelConfig standard;
  standard.pretrained = true;
  EXPECT_THROW(standard.validate(), ConfigError);
  cfg = toy_model();
  cfg.norm_variant = NormVariant::ibn;
  cfg.norm_blocks = {7};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Network, SeededInitialization) {
  EXPECT_DOUBLE_EQ(parameter_checksum(*build_model(toy_model(), 4)), parameter_checksum(*build_model(toy_model(), 4)));
  EXPECT_NE(parameter_checksum(*build_model(toy_model(), 4)), parameter_checksum(*build_model(toy_model(), 5)));
}

TEST(Network, UniStyleRunsOnConfiguredBlocks) {
  auto cfg = toy_model();
  cfg.norm_variant = NormVariant::unistyle;
  cfg.norm_blocks = {0, 2};
  auto model = build_model(cfg, 0);
  std::vector<int> whitened;
  model->set_block_observer([&](int block, bool w) {
    if (w) whitened.push_back(block);
  });
  model->forward(torch::randn({2, 3, 64, 64}));
  EXPECT_EQ(whitened, (std::vector<int>{0, 2}));
}

TEST(Network, IbnVariantBuildsAndRuns) {
  auto cfg = toy_model();
  cfg.norm_variant = NormVariant::ibn;
  auto model = build_model(cfg, 0);
  EXPECT_EQ(model->forward(torch::randn({2, 3, 64, 64})).size(1), 1);
  bool has_instance = false;
  for (const auto& [name, t] : weight_map(*model)) has_instance = has_instance || name.find(".in.") != std::string::npos;
  EXPECT_TRUE(has_instance);
}

TEST(Network, PadainOnlyInTraining) {
  auto cfg = toy_model();
  cfg.padain_prob = 1.0;
  auto model = build_model(cfg, 0);
  model->eval();
  torch::NoGradGuard guard;
  const auto x = torch::randn({3, 3, 64, 64});
  EXPECT_TRUE(torch::equal(model->forward(x), model->forward(x)));
}

TEST(Network, PretrainedBackboneIsLoaded) {
  TempDir dir("pretrained");
  ModelConfig cfg;
  cfg.input_width = cfg.input_height = 64;
  auto source = build_model(cfg, 1);
  c10::Dict<std::string, at::Tensor> dict;
  for (const auto& [name, t] : weight_map(*source)) {
    if (name.rfind("backbone", 0) == 0) dict.insert(name, t.detach().clone());
  }
  const auto bytes = torch::pickle_save(dict);
  std::ofstream(dir.path() / "w.pt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  cfg.pretrained = true;
  cfg.pretrained_weights = (dir.path() / "w.pt").string();
  auto loaded = build_model(cfg, 2);
  const auto a = weight_map(*source), b = weight_map(*loaded);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first.rfind("backbone", 0) == 0) EXPECT_TRUE(torch::equal(a[i].second, b[i].second)) << a[i].first;
  }
  cfg.pretrained_weights = (dir.path() / "missing.pt").string();
  EXPECT_THROW(build_model(cfg, 2), ConfigError);
}

TEST(Network, HeadBranchesAndAttention) {
  auto model = build_model(toy_model(), 0);
  const auto f = model->features(torch::randn({2, 3, 64, 64}));
  const auto br = model->head()->branches(f);
  EXPECT_EQ(br.deep.sizes(), br.mid.sizes());
  EXPECT_EQ(br.mid.size(2), 8);
  const auto att = model->head()->attention(f.deep);
  EXPECT_EQ(att.size(2), 1);
  EXPECT_TRUE(att.ge(0).logical_and(att.le(1)).all().item<bool>());
  // Zero attention silences branch 1.
  const auto silent = model->head()->branches(f, torch::zeros_like(att));
  const auto bias = model->head()->deep_classifier()->bias;
  const auto expected = bias.defined() ? bias.view({1, -1, 1, 1}).expand_as(silent.deep) : torch::zeros_like(silent.deep);
  EXPECT_TRUE(torch::allclose(silent.deep, expected, 1e-6, 1e-6));
}

TEST(NormVariants, WhitenStatistics) {
  const auto x = torch::randn({3, 4, 5, 5}) * 7 + 2;
  const auto w = unistyle_whiten(x);
  EXPECT_LT(w.mean({2, 3}).abs().max().item<double>(), 1e-5);
  EXPECT_LT((w.var({2, 3}, false) - 1).abs().max().item<double>(), 1e-4);
}

TEST(NormVariants, PadainSwapWithIdentityAndErrors) {
  const auto x = torch::randn({3, 4, 5, 5});
  const std::vector<std::int64_t> id{0, 1, 2};
  EXPECT_TRUE(torch::allclose(padain_swap_with(x, id), x, 1e-4, 1e-5));
  const std::vector<std::int64_t> bad{0, 0, 2};
  EXPECT_THROW(padain_swap_with(x, bad), ArgumentError);
  Rng rng(0);
  EXPECT_TRUE(torch::equal(padain_swap(x, 0.0, rng), x));
  EXPECT_TRUE(torch::equal(padain_swap(x.narrow(0, 0, 1), 1.0, rng), x.narrow(0, 0, 1)));
}

TEST(NormVariants, IbnSplitsChannels) {
  IBNorm n(6);
  EXPECT_EQ(n->instance_channels(), 3);
  n->train();
  const auto y = n->forward(torch::randn({2, 6, 4, 4}) * 5 + 3);
  // The instance half is standardized per sample.
  EXPECT_LT(y.narrow(1, 0, 3).mean({2, 3}).abs().max().item<double>(), 1e-5);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  TempDir dir("ckpt");
  auto model = build_model(toy_model(32), 3);
  const CheckpointMeta meta{toy_model(32), 3, 7, 0.5, "erm"};
  save_checkpoint(dir.path() / "m.pt", model, meta);
  auto loaded = load_checkpoint(dir.path() / "m.pt");
  EXPECT_EQ(loaded.meta.epoch, 7);
  EXPECT_EQ(loaded.meta.tag, "erm");
  EXPECT_EQ(loaded.meta.model, meta.model);
  EXPECT_EQ(read_checkpoint_meta(dir.path() / "m.pt").val_iou, 0.5);
  model->eval();
  torch::NoGradGuard guard;
  const auto x = torch::randn({1, 3, 32, 32});
  EXPECT_TRUE(torch::allclose(model->forward(x), loaded.model->forward(x)));
  std::ofstream(dir.path() / "bad.pt", std::ios::binary) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir.path() / "bad.pt"), IntegrityError);
  EXPECT_THROW(load_checkpoint(dir.path() / "none.pt"), IoError);
}
