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
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "cropdg/augment.hpp"
#include "cropdg/datamodel.hpp"
#include "cropdg/network.hpp"

namespace cropdg {

struct IoUConfig {
  double confidence_threshold = 0.9;

  void validate() const;

  friend bool operator==(const IoUConfig&, const IoUConfig&) = default;
};

/// Binarizes `probabilities` at the threshold (p >= t counts as positive) and
/// returns |pred & mask| / |pred | mask|; 1.0 when both are empty.
double iou(const torch::Tensor& probabilities, const torch::Tensor& mask, const IoUConfig& cfg = {});

/// Maps a normalized image batch [B, 3, H, W] to logits [B, 1, H, W].
using Predictor = std::function<torch::Tensor(const torch::Tensor& images)>;

/// Wraps a model for inference: eval mode, no autograd.
Predictor make_predictor(SegmentationNet model);

/// Per-sample IoU of raw (undecorated) samples after deterministic eval preprocessing.
std::vector<double> per_sample_iou(const Predictor& predictor, const std::vector<Sample>& samples,
                                   const AugmentConfig& preprocessing, const IoUConfig& cfg,
                                   std::int64_t batch_size = 16);

/// Mean per-sample IoU. Throws ArgumentError on an empty set.
double evaluate_samples(const Predictor& predictor, const std::vector<Sample>& samples,
                        const AugmentConfig& preprocessing, const IoUConfig& cfg, std::int64_t batch_size = 16);

double evaluate_domain(const Predictor& predictor, const DomainDataset& dataset, const AugmentConfig& preprocessing,
                       const IoUConfig& cfg, std::int64_t batch_size = 16);

}  // namespace cropdg
