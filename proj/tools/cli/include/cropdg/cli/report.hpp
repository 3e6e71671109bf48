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

#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "cropdg/benchmark.hpp"
#include "cropdg/cli/experiment.hpp"

namespace cropdg::cli {

/// Sigmoid of the model's logits for one [3, H, W] normalized input, [H, W].
torch::Tensor probability_map(SegmentationNet& model, const torch::Tensor& normalized_image);

/// Input tile followed by one grey tile per probability map, left to right:
/// [3, H, (1 + M) * W]. Probability tiles are copied unmodified.
torch::Tensor render_panel(const torch::Tensor& image, const std::vector<torch::Tensor>& probabilities);

struct SweepPoint {
  double kd_weight = 0.0;
  double temperature = 0.0;
  double iou = 0.0;
};

enum class SweepAxis { kd_weight, temperature };

struct SweepPlot {
  std::string svg;
  std::vector<double> x_ticks;       // exactly the configured grid on the x axis
  std::vector<double> series_values;  // one line per value of the other parameter
};

/// Mean IoU of every sweep method over the given results (all targets, seeds).
std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg, const std::vector<BenchmarkResult>& results);

/// Line chart of IoU against one sweep parameter with one line per value of
/// the other, categorical x axis over `x_grid`.
SweepPlot sweep_plot(const std::vector<SweepPoint>& points, SweepAxis axis, const std::vector<double>& x_grid,
                     const std::vector<double>& series_grid);

}  // namespace cropdg::cli
