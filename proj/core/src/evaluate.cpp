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

#include "cropdg/evaluate.hpp"

#include <numeric>

#include "cropdg/error.hpp"

namespace cropdg {

void IoUConfig::validate() const {
  if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0)) {
    throw ConfigError("confidence_threshold must lie strictly inside (0, 1)");
  }
}

double iou(const torch::Tensor& probabilities, const torch::Tensor& mask, const IoUConfig& cfg) {
  if (probabilities.sizes() != mask.sizes()) {
    throw ShapeError("probabilities " + c10::str(probabilities.sizes()) + " and mask " + c10::str(mask.sizes()) +
                     " differ in shape");
  }
  auto pred = probabilities.ge(cfg.confidence_threshold);
  auto truth = mask.gt(0.5);
  const auto inter = pred.logical_and(truth).sum().item<std::int64_t>();
  const auto uni = pred.logical_or(truth).sum().item<std::int64_t>();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Predictor make_predictor(SegmentationNet model) {
  return [model](const torch::Tensor& images) mutable {
    torch::NoGradGuard guard;
    model->eval();
    return model->forward(images);
  };
}

std::vector<double> per_sample_iou(const Predictor& predictor, const std::vector<Sample>& samples,
                                   const AugmentConfig& preprocessing, const IoUConfig& cfg, std::int64_t batch_size) {
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Sample> batch;
    for (auto i = start; i < end; ++i) batch.push_back(preprocess_eval(samples[i], preprocessing));
    auto [images, masks] = collate(batch);
    torch::Tensor probs;
    {
      torch::NoGradGuard guard;
      probs = torch::sigmoid(predictor(images));
    }
    if (probs.sizes() != masks.sizes()) throw ShapeError("predictor output does not match the mask batch");
    for (std::int64_t b = 0; b < probs.size(0); ++b) out.push_back(iou(probs[b], masks[b], cfg));
  }
  return out;
}

double evaluate_samples(const Predictor& predictor, const std::vector<Sample>& samples,
                        const AugmentConfig& preprocessing, const IoUConfig& cfg, std::int64_t batch_size) {
  if (samples.empty()) throw ArgumentError("cannot evaluate an empty dataset");
  const auto ious = per_sample_iou(predictor, samples, preprocessing, cfg, batch_size);
  return std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
}

double evaluate_domain(const Predictor& predictor, const DomainDataset& dataset, const AugmentConfig& preprocessing,
                       const IoUConfig& cfg, std::int64_t batch_size) {
  if (dataset.empty()) throw ArgumentError("cannot evaluate empty domain '" + dataset.name() + "'");
  return evaluate_samples(predictor, load_samples(dataset), preprocessing, cfg, batch_size);
}

}  // namespace cropdg
