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

#include <cmath>

#include "cropdg/distill.hpp"
#include "cropdg/error.hpp"
#include "test_support.hpp"

using namespace cropdg;
using namespace cropdg::testing;

namespace {

torch::Tensor t4(std::initializer_list<double> v, std::vector<std::int64_t> shape) {
  return torch::tensor(std::vector<double>(v), torch::kFloat64).view(shape);
}

}  // namespace

TEST(Distill, SpatialKdHandValue) {
  // p = (1/2, 1/2), q = (1/4, 3/4): KL = ln(4/3) / 2.
  const auto teacher = t4({0.0, 0.0}, {1, 1, 1, 2});
  const auto student = t4({0.0, std::log(3.0)}, {1, 1, 1, 2});
  EXPECT_NEAR(kd_loss_spatial(teacher, student, 1.0).item<double>(), 0.14384103622589045, 1e-12);
}

TEST(Distill, SpatialKdTemperatureHandValue) {
  // tau = 2: q = (1, sqrt 3) / (1 + sqrt 3), loss = 4 * 0.5 * ln(0.25 (1 + sqrt 3)^2 / sqrt 3).
  const auto teacher = t4({0.0, 0.0}, {1, 1, 1, 2});
  const auto student = t4({0.0, std::log(3.0)}, {1, 1, 1, 2});
  EXPECT_NEAR(kd_loss_spatial(teacher, student, 2.0).item<double>(), 0.14900914406163324, 1e-12);
}

TEST(Distill, ChannelKdHandValue) {
  // Two positions, channel pairs identical to the spatial case above at the first position.
  const auto teacher = t4({0.0, 5.0, 0.0, 5.0}, {1, 2, 1, 2});
  const auto student = t4({0.0, 5.0, std::log(3.0), 5.0}, {1, 2, 1, 2});
  EXPECT_NEAR(kd_loss_channel(teacher, student, 1.0).item<double>(), 0.14384103622589045 / 2, 1e-12);
}

TEST(Distill, BceHandValues) {
  EXPECT_NEAR(bce_loss(t4({1.0}, {1, 1, 1, 1}), t4({0.0}, {1, 1, 1, 1})).item<double>(), 0.69314718055994531, 1e-12);
  EXPECT_NEAR(bce_loss(t4({0.0}, {1, 1, 1, 1}), t4({2.0}, {1, 1, 1, 1})).item<double>(), 2.1269280110429727, 1e-12);
  // Extreme logits stay finite.
  EXPECT_NEAR(bce_loss(t4({1.0, 0.0}, {1, 1, 1, 2}), t4({-800.0, -800.0}, {1, 1, 1, 2})).item<double>(), 400.0, 1e-9);
}

TEST(Distill, MatchesScalarOracles) {
  torch::manual_seed(3);
  for (int k = 0; k < 20; ++k) {
    const Dims d{2, 3, 1 + k % 5, 2 + k % 3};
    const auto t = torch::randn({d.b, d.c, d.h, d.w}, torch::kFloat64) * 3;
    const auto s = torch::randn({d.b, d.c, d.h, d.w}, torch::kFloat64) * 3;
    EXPECT_LT(rel_err(kd_loss_spatial(t, s, 1.5).item<double>(), oracle_kd_spatial(to_vec(t), to_vec(s), d, 1.5)), 1e-10);
    EXPECT_LT(rel_err(kd_loss_channel(t, s, 0.5).item<double>(), oracle_kd_channel(to_vec(t), to_vec(s), d, 0.5)), 1e-10);
  }
}

TEST(Distill, FloatInputsWork) {
  const auto t = torch::randn({2, 1, 4, 4});
  const auto s = torch::randn({2, 1, 4, 4});
  const double expect = oracle_kd_spatial(to_vec(t), to_vec(s), Dims{2, 1, 4, 4}, 1.0);
  EXPECT_NEAR(kd_loss_spatial(t, s, 1.0).item<double>(), expect, 1e-5);
}

TEST(Distill, ChannelSoftmaxRejectsSingleChannel) {
  EXPECT_THROW(channel_softmax(torch::zeros({1, 1, 2, 2}), 1.0), ConfigError);
  EXPECT_THROW(kd_loss_channel(torch::zeros({1, 1, 2, 2}), torch::zeros({1, 1, 2, 2}), 1.0), ConfigError);
}

TEST(Distill, ShapeAndValueErrors) {
  EXPECT_THROW(kd_loss_spatial(torch::zeros({1, 1, 2, 2}), torch::zeros({1, 1, 2, 3}), 1.0), ShapeError);
  EXPECT_THROW(kd_loss_spatial(torch::zeros({1, 1, 2, 2}), torch::zeros({1, 1, 2, 2}), 0.0), ArgumentError);
  EXPECT_THROW(bce_loss(torch::zeros({1, 2, 2, 2}), torch::zeros({1, 2, 2, 2})), ShapeError);
  EXPECT_THROW(bce_loss(torch::full({1, 1, 2, 2}, 0.5), torch::zeros({1, 1, 2, 2})), ArgumentError);
  auto bad = torch::zeros({1, 1, 2, 2});
  bad[0][0][0][0] = NAN;
  EXPECT_THROW(kd_loss_spatial(torch::zeros({1, 1, 2, 2}), bad, 1.0), NumericError);
}

TEST(Distill, SoftmaxProperties) {
  const auto x = torch::randn({2, 3, 4, 5}, torch::kFloat64);
  const auto p = spatial_softmax(x, 1.0);
  EXPECT_LT((p.sum({2, 3}) - 1).abs().max().item<double>(), 1e-12);
  EXPECT_LT((channel_softmax(x, 2.0).sum(1) - 1).abs().max().item<double>(), 1e-12);
  EXPECT_LT((spatial_softmax(x + 7.5, 1.0) - p).abs().max().item<double>(), 1e-12);
}

TEST(Distill, EnsembleMeanAndErrors) {
  std::vector<torch::Tensor> ts{torch::full({1, 1, 2, 2}, 1.0), torch::full({1, 1, 2, 2}, 3.0)};
  const auto e = ensemble_teachers(ts);
  EXPECT_EQ(e.num_teachers, 2);
  EXPECT_TRUE(torch::allclose(e.values, torch::full({1, 1, 2, 2}, 2.0)));
  EXPECT_FALSE(e.values.requires_grad());
  EXPECT_THROW(ensemble_teachers({}), ArgumentError);
  std::vector<torch::Tensor> mismatch{torch::zeros({1, 1, 2, 2}), torch::zeros({1, 1, 2, 3})};
  EXPECT_THROW(ensemble_teachers(mismatch), ShapeError);
}

TEST(Distill, TotalLossLambdaZeroIsCe) {
  const auto mask = torch::tensor({1.0, 0.0, 1.0, 0.0}).view({1, 1, 2, 2});
  const auto student = torch::randn({1, 1, 2, 2});
  std::vector<torch::Tensor> ts{torch::randn({1, 1, 2, 2})};
  LossConfig cfg;
  cfg.kd_weight = 0.0;
  const auto out = total_loss(mask, ensemble_teachers(ts), student, cfg);
  EXPECT_TRUE(torch::equal(out.total, out.ce));
  cfg.kd_weight = 3.0;
  const auto with_kd = total_loss(mask, ensemble_teachers(ts), student, cfg);
  EXPECT_NEAR(with_kd.total.item<double>(), with_kd.ce.item<double>() + 3 * with_kd.kd.item<double>(), 1e-6);
}

TEST(Distill, TeacherReceivesNoGradient) {
  auto teacher = torch::randn({2, 1, 3, 3}).set_requires_grad(true);
  auto student = torch::randn({2, 1, 3, 3}).set_requires_grad(true);
  kd_loss_spatial(teacher, student, 1.0).backward();
  EXPECT_TRUE(!teacher.grad().defined() || teacher.grad().abs().max().item<double>() == 0.0);
  EXPECT_GT(student.grad().abs().max().item<double>(), 0.0);
}

TEST(Distill, ConfigParsingAndValidation) {
  EXPECT_EQ(parse_softmax_axis("spatial"), SoftmaxAxis::spatial);
  EXPECT_EQ(to_string(SoftmaxAxis::channel), "channel");
  EXPECT_THROW(parse_softmax_axis("pixel"), ConfigError);
  LossConfig cfg;
  EXPECT_EQ(cfg.temperature, 1.0);
  EXPECT_EQ(cfg.kd_weight, 3.0);
  cfg.temperature = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
