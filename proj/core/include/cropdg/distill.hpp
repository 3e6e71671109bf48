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

#include <cstdint>
#include <span>
#include <string>

#include <torch/torch.h>

namespace cropdg {

// All logits tensors are laid out [B, C, H, W]. Losses are defined per sample
// and averaged over the batch.

enum class SoftmaxAxis { spatial, channel };

std::string to_string(SoftmaxAxis a);
SoftmaxAxis parse_softmax_axis(const std::string& s);

struct LossConfig {
  double temperature = 1.0;
  double kd_weight = 3.0;
  SoftmaxAxis softmax_axis = SoftmaxAxis::spatial;

  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Mean of the teacher logits; detached from any graph.
struct EnsembleOutput {
  torch::Tensor values;
  std::int64_t num_teachers = 0;
};

/// Element-wise mean over D teachers. The per-element summation order is
/// fixed by sorting, so any reordering of the list gives bit-identical output.
EnsembleOutput ensemble_teachers(std::span<const torch::Tensor> teacher_logits);

/// Softmax over the flattened H*W positions of every (sample, channel).
torch::Tensor spatial_softmax(const torch::Tensor& logits, double temperature);

/// Softmax over channels at every position. C = 1 is a ConfigError: the
/// binary single-channel case has to use the spatial formulation.
torch::Tensor channel_softmax(const torch::Tensor& logits, double temperature);

/// (tau^2 / C) * sum_c sum_i p_t log(p_t / p_s) with spatial softmaxes.
/// Gradient flows into `student` only.
torch::Tensor kd_loss_spatial(const EnsembleOutput& teacher, const torch::Tensor& student, double temperature);
torch::Tensor kd_loss_spatial(const torch::Tensor& teacher, const torch::Tensor& student, double temperature);

/// tau^2 * mean over positions of the channel-softmax KL. Requires C >= 2.
torch::Tensor kd_loss_channel(const EnsembleOutput& teacher, const torch::Tensor& student, double temperature);
torch::Tensor kd_loss_channel(const torch::Tensor& teacher, const torch::Tensor& student, double temperature);

/// Mean binary cross-entropy on single-channel logits, logit-space stable form.
/// `mask` is [B, 1, H, W] (or [B, H, W]) with values in {0, 1}.
torch::Tensor bce_loss(const torch::Tensor& mask, const torch::Tensor& student);

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor ce;
  torch::Tensor kd;
};

/// L_CE + lambda * L_KD, the KD term picked by cfg.softmax_axis. With
/// lambda = 0 the total is the CE tensor itself.
LossBreakdown total_loss(const torch::Tensor& mask, const EnsembleOutput& teacher, const torch::Tensor& student,
                         const LossConfig& cfg);

}  // namespace cropdg
