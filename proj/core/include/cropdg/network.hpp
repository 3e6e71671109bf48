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
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cropdg/norm_variants.hpp"
#include "cropdg/seeding.hpp"

namespace cropdg {

enum class Backbone { standard, toy };
enum class NormVariant { none, ibn, unistyle };

std::string to_string(Backbone b);
std::string to_string(NormVariant v);
Backbone parse_backbone(const std::string& s);
NormVariant parse_norm_variant(const std::string& s);

struct ModelConfig {
  Backbone backbone = Backbone::standard;
  bool pretrained = false;
  // Serialized backbone weights (torch archive keyed by parameter name).
  std::string pretrained_weights;
  std::int64_t input_width = 224;
  std::int64_t input_height = 224;
  std::int64_t num_classes = 1;
  NormVariant norm_variant = NormVariant::none;
  // Backbone blocks carrying the variant. Empty means the first three.
  std::vector<int> norm_blocks;
  double padain_prob = 0.0;
  // Width of the head's attention branch; 0 picks 128 (standard) or 32 (toy).
  std::int64_t head_channels = 0;

  void validate() const;
  std::vector<int> effective_norm_blocks() const;
  std::int64_t effective_head_channels() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Number of addressable backbone blocks (block 0 is the stem).
int backbone_block_count(Backbone b);

/// Backbone taps at 1/8 (mid) and 1/16 (deep) of the input resolution.
struct FeaturePyramid {
  torch::Tensor mid;
  torch::Tensor deep;
};

/// Inverted-residual block: optional 1x1 expansion, depthwise conv,
/// optional squeeze-excite, linear 1x1 projection, identity skip when shapes allow.
struct InvertedResidualSpec {
  std::int64_t in = 0;
  std::int64_t kernel = 3;
  std::int64_t expand = 0;
  std::int64_t out = 0;
  bool squeeze_excite = false;
  bool hard_swish = false;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
};

class SqueezeExciteImpl : public torch::nn::Module {
 public:
  SqueezeExciteImpl(std::int64_t channels, std::int64_t squeezed);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(SqueezeExcite);

class InvertedResidualImpl : public torch::nn::Module {
 public:
  InvertedResidualImpl(const InvertedResidualSpec& spec, bool ibn);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  InvertedResidualSpec spec_;
  bool residual_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(InvertedResidual);

/// Two-branch lite R-ASPP head. Branch 1 gates a conv-bn-relu view of the
/// deep features with a pooled sigmoid attention, upsamples to the mid
/// resolution and maps to C channels; branch 2 maps the mid features to C
/// channels. The sum is upsampled to the input size.
class LRASPPHeadImpl : public torch::nn::Module {
 public:
  LRASPPHeadImpl(std::int64_t mid_channels, std::int64_t deep_channels, std::int64_t inter_channels,
                 std::int64_t num_classes);

  struct Branches {
    torch::Tensor deep;  // branch 1 at mid resolution, C channels
    torch::Tensor mid;   // branch 2 at mid resolution, C channels
  };

  /// Channel attention [B, inter, 1, 1] computed from the deep features.
  torch::Tensor attention(const torch::Tensor& deep);

  Branches branches(const FeaturePyramid& p, const std::optional<torch::Tensor>& attention_override = std::nullopt);

  torch::Tensor forward(const FeaturePyramid& p, std::int64_t height, std::int64_t width,
                        const std::optional<torch::Tensor>& attention_override = std::nullopt);

  torch::nn::Conv2d& mid_classifier() { return low_classifier_; }
  torch::nn::Conv2d& deep_classifier() { return high_classifier_; }

 private:
  torch::nn::Sequential cbr_{nullptr};
  torch::nn::Conv2d scale_conv_{nullptr};
  torch::nn::Conv2d low_classifier_{nullptr};
  torch::nn::Conv2d high_classifier_{nullptr};
};
TORCH_MODULE(LRASPPHead);

/// Called after every backbone block with the block index and whether
/// whitening ran on its output.
using BlockObserver = std::function<void(int block, bool whitened)>;

class SegmentationNetImpl : public torch::nn::Module {
 public:
  explicit SegmentationNetImpl(const ModelConfig& cfg, std::uint64_t seed = 0);

  /// [B, 3, H, W] normalized images -> [B, C, H, W] logits.
  torch::Tensor forward(const torch::Tensor& images);
  FeaturePyramid features(const torch::Tensor& images);

  const ModelConfig& config() const { return cfg_; }
  LRASPPHead& head() { return head_; }
  void set_block_observer(BlockObserver observer) { observer_ = std::move(observer); }
  /// Reseeds the generator that drives stochastic feature layers.
  void reseed(std::uint64_t seed) { rng_.seed(derive_seed(seed, "padain")); }

 private:
  ModelConfig cfg_;
  Rng rng_;
  std::vector<torch::nn::AnyModule> blocks_;
  std::vector<bool> whiten_;
  std::vector<PermutedAdaIN> padain_;
  int mid_tap_ = 0;
  int deep_tap_ = 0;
  LRASPPHead head_{nullptr};
  BlockObserver observer_;
};
TORCH_MODULE(SegmentationNet);

/// Builds and initializes a model. Initialization draws from a generator
/// seeded with `seed`. Throws ConfigError for invalid configs, including a
/// pretrained toy backbone.
SegmentationNet build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Parameters and buffers by name, in registration order.
std::vector<std::pair<std::string, torch::Tensor>> weight_map(const torch::nn::Module& m);

/// Deep copy of all parameters and buffers, and its inverse.
std::vector<torch::Tensor> snapshot_state(const torch::nn::Module& m);
void restore_state(torch::nn::Module& m, const std::vector<torch::Tensor>& state);

/// Order-sensitive checksum of all parameters, for "did this model change" checks.
double parameter_checksum(const torch::nn::Module& m);

}  // namespace cropdg
