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

#include <benchmark/benchmark.h>

#include "cropdg/distill.hpp"
#include "cropdg/evaluate.hpp"
#include "cropdg/network.hpp"

using namespace cropdg;

static void BM_KdSpatial(benchmark::State& state) {
  const auto n = state.range(0);
  const auto t = torch::randn({8, 1, n, n});
  const auto s = torch::randn({8, 1, n, n});
  for (auto _ : state) benchmark::DoNotOptimize(kd_loss_spatial(t, s, 2.0).item<double>());
}
BENCHMARK(BM_KdSpatial)->Arg(64)->Arg(224);

static void BM_TotalLossBackward(benchmark::State& state) {
  const auto n = state.range(0);
  const std::vector<torch::Tensor> teachers{torch::randn({8, 1, n, n}), torch::randn({8, 1, n, n}),
                                            torch::randn({8, 1, n, n})};
  const auto ensemble = ensemble_teachers(teachers);
  const auto mask = torch::randint(0, 2, {8, 1, n, n}).to(torch::kFloat);
  LossConfig cfg;
  for (auto _ : state) {
    auto s = torch::randn({8, 1, n, n}, torch::requires_grad());
    total_loss(mask, ensemble, s, cfg).total.backward();
    benchmark::DoNotOptimize(s.grad().data_ptr());
  }
}
BENCHMARK(BM_TotalLossBackward)->Arg(64)->Arg(224);

static void BM_Iou(benchmark::State& state) {
  const auto p = torch::rand({1, 1, 224, 224});
  const auto m = torch::randint(0, 2, {1, 1, 224, 224}).to(torch::kFloat);
  for (auto _ : state) benchmark::DoNotOptimize(iou(p, m));
}
BENCHMARK(BM_Iou);

static void BM_Forward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.backbone = state.range(0) == 0 ? Backbone::toy : Backbone::standard;
  cfg.input_width = cfg.input_height = state.range(1);
  auto model = build_model(cfg, 0);
  model->eval();
  torch::NoGradGuard guard;
  const auto x = torch::randn({1, 3, state.range(1), state.range(1)});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x).data_ptr());
}
BENCHMARK(BM_Forward)->Args({0, 64})->Args({1, 224})->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
