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

#include <array>
#include <cstdint>
#include <utility>

#include <torch/torch.h>

#include "cropdg/datamodel.hpp"
#include "cropdg/seeding.hpp"

namespace cropdg {

struct AugmentConfig {
  std::pair<double, double> crop_factor_range{0.5, 1.0};
  double flip_prob = 0.5;
  double greyscale_prob = 0.1;
  double brightness_contrast_max_delta = 0.4;
  std::int64_t output_width = 224;
  std::int64_t output_height = 224;
  // ImageNet channel statistics.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  void validate() const;
};

/// (x - mean_c) / std_c per channel; accepts [3, H, W] or [B, 3, H, W].
torch::Tensor normalize(const torch::Tensor& image, const AugmentConfig& cfg);
torch::Tensor denormalize(const torch::Tensor& image, const AugmentConfig& cfg);

/// Square crop of side round(factor * min(H, W)) at a uniform position.
struct CropWindow {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t side = 0;
  double factor = 1.0;
};

CropWindow draw_crop_window(std::int64_t height, std::int64_t width, std::pair<double, double> factor_range, Rng& rng);
Sample apply_crop(const Sample& sample, const CropWindow& window);

/// Bilinear for the image, nearest-neighbour (then re-binarized) for the mask.
Sample resize_sample(const Sample& sample, std::int64_t width, std::int64_t height);

Sample hflip(const Sample& sample);
torch::Tensor to_greyscale(const torch::Tensor& image);

/// Crop with a factor drawn from `factor_range`, resized to the configured output size.
Sample random_crop(const Sample& sample, std::pair<double, double> factor_range, const AugmentConfig& cfg, Rng& rng);

/// What the pipeline drew for one sample.
struct AugmentTrace {
  CropWindow crop;
  bool flipped = false;
  bool greyscale = false;
  double brightness_shift = 0.0;  // added to every pixel
  double contrast_scale = 1.0;    // applied around the image mean
};

/// crop -> flip -> greyscale -> brightness/contrast -> resize -> normalize.
/// The mask only sees the geometric steps. Every random draw happens in a
/// fixed order whatever the outcomes, so streams stay aligned across samples.
Sample augment_pipeline(const Sample& sample, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace = nullptr);

/// Deterministic evaluation preprocessing: resize + normalize.
Sample preprocess_eval(const Sample& sample, const AugmentConfig& cfg);

/// Stacks preprocessed samples into images [B, 3, H, W] and masks [B, 1, H, W].
std::pair<torch::Tensor, torch::Tensor> collate(const std::vector<Sample>& samples);

}  // namespace cropdg
