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

#include "cropdg/augment.hpp"

#include <cmath>
#include <random>

#include "cropdg/error.hpp"

namespace cropdg {

namespace F = torch::nn::functional;

void AugmentConfig::validate() const {
  const auto [lo, hi] = crop_factor_range;
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) throw ConfigError("crop_factor_range must satisfy 0 < low <= high <= 1");
  for (double p : {flip_prob, greyscale_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  if (!(brightness_contrast_max_delta >= 0.0 && brightness_contrast_max_delta < 1.0)) {
    throw ConfigError("brightness_contrast_max_delta must lie in [0, 1)");
  }
  if (output_width <= 0 || output_height <= 0) throw ConfigError("output_size must be positive");
  for (double s : std) {
    if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
  }
}

namespace {

torch::Tensor channel_stats(const std::array<double, 3>& v, const torch::Tensor& like) {
  auto t = torch::tensor({v[0], v[1], v[2]}, like.options());
  return like.dim() == 4 ? t.view({1, 3, 1, 1}) : t.view({3, 1, 1});
}

void check_rgb(const torch::Tensor& image) {
  const bool ok = (image.dim() == 3 && image.size(0) == 3) || (image.dim() == 4 && image.size(1) == 3);
  if (!ok) throw ShapeError("expected an RGB tensor [3, H, W] or [B, 3, H, W], got " + std::to_string(image.dim()) + "-d with sizes " + c10::str(image.sizes()));
}

}  // namespace

torch::Tensor normalize(const torch::Tensor& image, const AugmentConfig& cfg) {
  check_rgb(image);
  return (image - channel_stats(cfg.mean, image)) / channel_stats(cfg.std, image);
}

torch::Tensor denormalize(const torch::Tensor& image, const AugmentConfig& cfg) {
  check_rgb(image);
  return image * channel_stats(cfg.std, image) + channel_stats(cfg.mean, image);
}

CropWindow draw_crop_window(std::int64_t height, std::int64_t width, std::pair<double, double> factor_range, Rng& rng) {
  const auto [lo, hi] = factor_range;
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) throw ArgumentError("crop factor range must lie within (0, 1]");
  CropWindow w;
  w.factor = std::uniform_real_distribution<double>(lo, hi)(rng);
  if (lo == hi) w.factor = lo;
  w.side = std::llround(w.factor * static_cast<double>(std::min(height, width)));
  if (w.side < 1) throw ArgumentError("crop smaller than one pixel");
  w.top = std::uniform_int_distribution<std::int64_t>(0, height - w.side)(rng);
  w.left = std::uniform_int_distribution<std::int64_t>(0, width - w.side)(rng);
  return w;
}

Sample apply_crop(const Sample& sample, const CropWindow& w) {
  using torch::indexing::Slice;
  if (w.side < 1) throw ArgumentError("crop smaller than one pixel");
  if (w.top < 0 || w.left < 0 || w.top + w.side > sample.mask.size(0) || w.left + w.side > sample.mask.size(1)) {
    throw ArgumentError("crop window outside the sample");
  }
  const auto rows = Slice(w.top, w.top + w.side);
  const auto cols = Slice(w.left, w.left + w.side);
  return Sample{sample.image.index({Slice(), rows, cols}).contiguous(), sample.mask.index({rows, cols}).contiguous(),
                sample.domain};
}

Sample resize_sample(const Sample& sample, std::int64_t width, std::int64_t height) {
  if (sample.mask.size(0) == height && sample.mask.size(1) == width) return sample;
  auto image = F::interpolate(sample.image.unsqueeze(0), F::InterpolateFuncOptions()
                                                            .size(std::vector<std::int64_t>{height, width})
                                                            .mode(torch::kBilinear)
                                                            .align_corners(false))
                   .squeeze(0)
                   .clamp(0.0, 1.0);
  auto mask = F::interpolate(sample.mask.view({1, 1, sample.mask.size(0), sample.mask.size(1)}),
                             F::InterpolateFuncOptions().size(std::vector<std::int64_t>{height, width}).mode(torch::kNearest))
                  .view({height, width})
                  .gt(0.5)
                  .to(sample.mask.dtype());
  return Sample{image, mask, sample.domain};
}

Sample hflip(const Sample& sample) {
  return Sample{sample.image.flip({2}), sample.mask.flip({1}), sample.domain};
}

torch::Tensor to_greyscale(const torch::Tensor& image) {
  check_rgb(image);
  auto lum = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2];
  return lum.unsqueeze(0).expand({3, -1, -1}).contiguous();
}

Sample random_crop(const Sample& sample, std::pair<double, double> factor_range, const AugmentConfig& cfg, Rng& rng) {
  const auto w = draw_crop_window(sample.mask.size(0), sample.mask.size(1), factor_range, rng);
  return resize_sample(apply_crop(sample, w), cfg.output_width, cfg.output_height);
}

Sample augment_pipeline(const Sample& sample, const AugmentConfig& cfg, Rng& rng, AugmentTrace* trace) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  AugmentTrace t;
  t.crop = draw_crop_window(sample.mask.size(0), sample.mask.size(1), cfg.crop_factor_range, rng);
  t.flipped = unit(rng) < cfg.flip_prob;
  t.greyscale = unit(rng) < cfg.greyscale_prob;
  t.brightness_shift = sym(rng) * cfg.brightness_contrast_max_delta;
  t.contrast_scale = 1.0 + sym(rng) * cfg.brightness_contrast_max_delta;

  Sample out = apply_crop(sample, t.crop);
  if (t.flipped) out = hflip(out);
  if (t.greyscale) out.image = to_greyscale(out.image);
  auto img = (out.image + t.brightness_shift).clamp(0.0, 1.0);
  const auto mean = img.mean();
  out.image = ((img - mean) * t.contrast_scale + mean).clamp(0.0, 1.0);
  out = resize_sample(out, cfg.output_width, cfg.output_height);
  out.image = normalize(out.image, cfg);
  if (trace != nullptr) *trace = t;
  return out;
}

Sample preprocess_eval(const Sample& sample, const AugmentConfig& cfg) {
  Sample out = resize_sample(sample, cfg.output_width, cfg.output_height);
  out.image = normalize(out.image, cfg);
  return out;
}

std::pair<torch::Tensor, torch::Tensor> collate(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ArgumentError("cannot collate an empty batch");
  std::vector<torch::Tensor> images, masks;
  images.reserve(samples.size());
  masks.reserve(samples.size());
  for (const auto& s : samples) {
    images.push_back(s.image);
    masks.push_back(s.mask.unsqueeze(0));
  }
  return {torch::stack(images), torch::stack(masks)};
}

}  // namespace cropdg
