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

#include "cropdg/network.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "cropdg/error.hpp"

namespace cropdg {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(Backbone b) { return b == Backbone::standard ? "standard" : "toy"; }

std::string to_string(NormVariant v) {
  switch (v) {
    case NormVariant::none: return "none";
    case NormVariant::ibn: return "ibn";
    case NormVariant::unistyle: return "unistyle";
  }
  return "none";
}

Backbone parse_backbone(const std::string& s) {
  if (s == "standard") return Backbone::standard;
  if (s == "toy") return Backbone::toy;
  throw ConfigError("unknown backbone '" + s + "' (expected standard|toy)");
}

NormVariant parse_norm_variant(const std::string& s) {
  if (s == "none") return NormVariant::none;
  if (s == "ibn") return NormVariant::ibn;
  if (s == "unistyle") return NormVariant::unistyle;
  throw ConfigError("unknown norm variant '" + s + "' (expected none|ibn|unistyle)");
}

namespace {

// MobileNetV3-Large with a dilated last stage so the deepest features stay at 1/16.
const std::vector<InvertedResidualSpec> kStandardBlocks = {
    {16, 3, 16, 16, false, false, 1, 1},    {16, 3, 64, 24, false, false, 2, 1},
    {24, 3, 72, 24, false, false, 1, 1},    {24, 5, 72, 40, true, false, 2, 1},
    {40, 5, 120, 40, true, false, 1, 1},    {40, 5, 120, 40, true, false, 1, 1},
    {40, 3, 240, 80, false, true, 2, 1},    {80, 3, 200, 80, false, true, 1, 1},
    {80, 3, 184, 80, false, true, 1, 1},    {80, 3, 184, 80, false, true, 1, 1},
    {80, 3, 480, 112, true, true, 1, 1},    {112, 3, 672, 112, true, true, 1, 1},
    {112, 5, 672, 160, true, true, 1, 2},   {160, 5, 960, 160, true, true, 1, 2},
    {160, 5, 960, 160, true, true, 1, 2},
};
constexpr std::int64_t kStandardLastChannels = 960;
constexpr int kStandardMidTap = 4;

// Reduced-depth variant with the same 1/8 and 1/16 taps.
const std::vector<InvertedResidualSpec> kToyBlocks = {
    {16, 3, 16, 16, false, false, 2, 1},
    {16, 3, 64, 24, false, false, 2, 1},
    {24, 5, 96, 40, true, false, 2, 1},
    {40, 3, 192, 96, true, true, 1, 1},
};
constexpr int kToyMidTap = 2;

std::int64_t make_divisible(double v, std::int64_t divisor = 8) {
  auto out = std::max(divisor, static_cast<std::int64_t>(v + divisor / 2.0) / divisor * divisor);
  if (static_cast<double>(out) < 0.9 * v) out += divisor;
  return out;
}

nn::AnyModule norm_layer(std::int64_t channels, bool ibn) {
  if (ibn) return nn::AnyModule(IBNorm(channels));
  return nn::AnyModule(nn::BatchNorm2d(nn::BatchNorm2dOptions(channels).eps(kNormEps)));
}

nn::AnyModule activation(bool hard_swish) {
  if (hard_swish) return nn::AnyModule(nn::Functional([](const torch::Tensor& x) { return torch::hardswish(x); }));
  return nn::AnyModule(nn::ReLU(nn::ReLUOptions().inplace(false)));
}

// Sequential with a concrete forward so it can sit inside AnyModule.
struct ConvNormActImpl : nn::SequentialImpl {
  using SequentialImpl::SequentialImpl;
  torch::Tensor forward(torch::Tensor x) { return SequentialImpl::forward(x); }
};
TORCH_MODULE(ConvNormAct);

ConvNormAct conv_norm_act(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                             std::int64_t groups, std::int64_t dilation, bool ibn, std::optional<bool> hard_swish) {
  ConvNormAct s;
  s->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                              .stride(stride)
                              .padding((kernel - 1) / 2 * dilation)
                              .dilation(dilation)
                              .groups(groups)
                              .bias(false)));
  s->push_back(norm_layer(out, ibn));
  if (hard_swish) s->push_back(activation(*hard_swish));
  return s;
}

}  // namespace

int backbone_block_count(Backbone b) {
  return b == Backbone::standard ? static_cast<int>(kStandardBlocks.size()) + 2 : static_cast<int>(kToyBlocks.size()) + 1;
}

void ModelConfig::validate() const {
  if (input_width <= 0 || input_height <= 0 || input_width % 16 != 0 || input_height % 16 != 0) {
    throw ConfigError("input size must be positive and divisible by 16, got " + std::to_string(input_width) + "x" +
                      std::to_string(input_height));
  }
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (pretrained && backbone == Backbone::toy) throw ConfigError("no pretrained weights exist for the toy backbone");
  if (pretrained && pretrained_weights.empty()) {
    throw ConfigError("pretrained=true requires model.pretrained_weights to point at a backbone weight archive");
  }
  if (!(padain_prob >= 0.0 && padain_prob <= 1.0)) throw ConfigError("padain_prob must lie in [0, 1]");
  if (head_channels < 0) throw ConfigError("head_channels must be >= 0");
  const int n = backbone_block_count(backbone);
  std::set<int> seen;
  for (int b : norm_blocks) {
    if (b < 0 || b >= n) {
      throw ConfigError("norm block " + std::to_string(b) + " out of range for the " + to_string(backbone) +
                        " backbone (0.." + std::to_string(n - 1) + ")");
    }
    if (!seen.insert(b).second) throw ConfigError("duplicate norm block " + std::to_string(b));
  }
  if (!norm_blocks.empty() && norm_variant == NormVariant::none) {
    throw ConfigError("norm_blocks given but norm_variant is none");
  }
}

std::vector<int> ModelConfig::effective_norm_blocks() const {
  if (norm_variant == NormVariant::none) return {};
  if (!norm_blocks.empty()) return norm_blocks;
  return {0, 1, 2};
}

std::int64_t ModelConfig::effective_head_channels() const {
  if (head_channels > 0) return head_channels;
  return backbone == Backbone::standard ? 128 : 32;
}

SqueezeExciteImpl::SqueezeExciteImpl(std::int64_t channels, std::int64_t squeezed) {
  fc1_ = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, squeezed, 1)));
  fc2_ = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(squeezed, channels, 1)));
}

torch::Tensor SqueezeExciteImpl::forward(const torch::Tensor& x) {
  auto s = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
  s = torch::relu(fc1_->forward(s));
  return x * torch::hardsigmoid(fc2_->forward(s));
}

InvertedResidualImpl::InvertedResidualImpl(const InvertedResidualSpec& spec, bool ibn)
    : spec_(spec), residual_(spec.stride == 1 && spec.in == spec.out) {
  body_ = nn::Sequential();
  bool first_norm = true;
  if (spec.expand != spec.in) {
    body_->push_back(conv_norm_act(spec.in, spec.expand, 1, 1, 1, 1, ibn, spec.hard_swish));
    first_norm = false;
  }
  body_->push_back(conv_norm_act(spec.expand, spec.expand, spec.kernel, spec.stride, spec.expand, spec.dilation,
                                 ibn && first_norm, spec.hard_swish));
  if (spec.squeeze_excite) body_->push_back(SqueezeExcite(spec.expand, make_divisible(spec.expand / 4.0)));
  body_->push_back(conv_norm_act(spec.expand, spec.out, 1, 1, 1, 1, false, std::nullopt));
  register_module("body", body_);
}

torch::Tensor InvertedResidualImpl::forward(const torch::Tensor& x) {
  auto y = body_->forward(x);
  return residual_ ? y + x : y;
}

LRASPPHeadImpl::LRASPPHeadImpl(std::int64_t mid_channels, std::int64_t deep_channels, std::int64_t inter_channels,
                               std::int64_t num_classes) {
  cbr_ = register_module("cbr", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(deep_channels, inter_channels, 1).bias(false)),
                                               nn::BatchNorm2d(nn::BatchNorm2dOptions(inter_channels).eps(kNormEps)),
                                               nn::ReLU()));
  scale_conv_ = register_module("scale", nn::Conv2d(nn::Conv2dOptions(deep_channels, inter_channels, 1).bias(false)));
  low_classifier_ = register_module("low_classifier", nn::Conv2d(nn::Conv2dOptions(mid_channels, num_classes, 1)));
  high_classifier_ = register_module("high_classifier", nn::Conv2d(nn::Conv2dOptions(inter_channels, num_classes, 1)));
}

torch::Tensor LRASPPHeadImpl::attention(const torch::Tensor& deep) {
  auto pooled = F::adaptive_avg_pool2d(deep, F::AdaptiveAvgPool2dFuncOptions(1));
  return torch::sigmoid(scale_conv_->forward(pooled));
}

LRASPPHeadImpl::Branches LRASPPHeadImpl::branches(const FeaturePyramid& p,
                                                  const std::optional<torch::Tensor>& attention_override) {
  auto gated = cbr_->forward(p.deep);
  auto att = attention_override ? *attention_override : attention(p.deep);
  gated = gated * att.expand_as(gated);
  gated = F::interpolate(gated, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{p.mid.size(2), p.mid.size(3)})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  Branches b{high_classifier_->forward(gated), low_classifier_->forward(p.mid)};
  if (b.deep.size(1) != b.mid.size(1)) throw ShapeError("head branches disagree on the channel count");
  return b;
}

torch::Tensor LRASPPHeadImpl::forward(const FeaturePyramid& p, std::int64_t height, std::int64_t width,
                                      const std::optional<torch::Tensor>& attention_override) {
  auto b = branches(p, attention_override);
  return F::interpolate(b.deep + b.mid, F::InterpolateFuncOptions()
                                            .size(std::vector<std::int64_t>{height, width})
                                            .mode(torch::kBilinear)
                                            .align_corners(false));
}

SegmentationNetImpl::SegmentationNetImpl(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  reseed(seed);
  const auto variant_blocks = cfg_.effective_norm_blocks();
  const auto has_variant = [&](int i) {
    return std::find(variant_blocks.begin(), variant_blocks.end(), i) != variant_blocks.end();
  };
  const bool ibn = cfg_.norm_variant == NormVariant::ibn;

  const bool standard = cfg_.backbone == Backbone::standard;
  const auto& specs = standard ? kStandardBlocks : kToyBlocks;
  blocks_.push_back(nn::AnyModule(conv_norm_act(3, 16, 3, 2, 1, 1, ibn && has_variant(0), /*hard_swish=*/true)));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    blocks_.push_back(nn::AnyModule(InvertedResidual(specs[i], ibn && has_variant(index))));
  }
  std::int64_t deep_channels = specs.back().out;
  if (standard) {
    blocks_.push_back(nn::AnyModule(conv_norm_act(specs.back().out, kStandardLastChannels, 1, 1, 1, 1,
                                                  ibn && has_variant(static_cast<int>(blocks_.size())), true)));
    deep_channels = kStandardLastChannels;
  }
  mid_tap_ = standard ? kStandardMidTap : kToyMidTap;
  deep_tap_ = static_cast<int>(blocks_.size()) - 1;
  const std::int64_t mid_channels = specs[mid_tap_ - 1].out;

  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    register_module("backbone_" + std::to_string(i), blocks_[i].ptr());
    whiten_.push_back(cfg_.norm_variant == NormVariant::unistyle && has_variant(static_cast<int>(i)));
    padain_.push_back(register_module("padain_" + std::to_string(i), PermutedAdaIN(cfg_.padain_prob, &rng_)));
  }
  head_ = register_module("head", LRASPPHead(mid_channels, deep_channels, cfg_.effective_head_channels(), cfg_.num_classes));
}

FeaturePyramid SegmentationNetImpl::features(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("model input must be [B, 3, H, W]");
  if (images.size(2) % 16 != 0 || images.size(3) % 16 != 0) {
    throw ShapeError("model input spatial size must be divisible by 16");
  }
  FeaturePyramid p;
  auto x = images;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i].forward(x);
    if (whiten_[i]) x = unistyle_whiten(x);
    x = padain_[i]->forward(x);
    if (observer_) observer_(static_cast<int>(i), whiten_[i]);
    if (static_cast<int>(i) == mid_tap_) p.mid = x;
    if (static_cast<int>(i) == deep_tap_) p.deep = x;
  }
  return p;
}

torch::Tensor SegmentationNetImpl::forward(const torch::Tensor& images) {
  return head_->forward(features(images), images.size(2), images.size(3));
}

namespace {

void initialize(nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& mod : m.modules(/*include_self=*/false)) {
    if (auto* conv = mod->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* bn = mod->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    } else if (auto* in = mod->as<nn::InstanceNorm2d>()) {
      nn::init::ones_(in->weight);
      nn::init::zeros_(in->bias);
    }
  }
}

void load_backbone_weights(SegmentationNetImpl& model, const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("pretrained weights not found: " + path);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::impl::GenericDict dict(c10::StringType::get(), c10::AnyType::get());
  try {
    auto value = torch::pickle_load(bytes);
    if (!value.isGenericDict()) throw ConfigError("pretrained weights must be a name -> tensor dictionary");
    dict = value.toGenericDict();
  } catch (const c10::Error& e) {
    throw ConfigError("cannot read pretrained weights " + path + ": " + e.what_without_backtrace());
  }
  torch::NoGradGuard guard;
  for (auto& [name, tensor] : weight_map(model)) {
    if (name.rfind("backbone_", 0) != 0) continue;
    auto it = dict.find(name);
    if (it == dict.end()) throw ConfigError("pretrained weights lack '" + name + "'");
    const auto loaded = it->value().toTensor();
    if (loaded.sizes() != tensor.sizes()) throw ConfigError("pretrained weight '" + name + "' has the wrong shape");
    tensor.copy_(loaded);
  }
}

}  // namespace

SegmentationNet build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(derive_seed(seed, "init"));
  SegmentationNet model(cfg, seed);
  initialize(*model);
  if (cfg.pretrained) load_backbone_weights(*model, cfg.pretrained_weights);
  return model;
}

std::vector<std::pair<std::string, torch::Tensor>> weight_map(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters(true)) out.emplace_back(p.key(), p.value());
  for (const auto& b : m.named_buffers(true)) out.emplace_back(b.key(), b.value());
  return out;
}

std::vector<torch::Tensor> snapshot_state(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& [name, t] : weight_map(m)) out.push_back(t.detach().clone());
  return out;
}

void restore_state(torch::nn::Module& m, const std::vector<torch::Tensor>& state) {
  auto current = weight_map(m);
  if (current.size() != state.size()) throw ShapeError("state snapshot does not match the model");
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < state.size(); ++i) current[i].second.copy_(state[i]);
}

double parameter_checksum(const torch::nn::Module& m) {
  double acc = 0.0;
  double k = 1.0;
  for (const auto& p : m.parameters(true)) {
    acc += k * p.detach().to(torch::kFloat64).sum().item<double>() + p.detach().to(torch::kFloat64).abs().sum().item<double>();
    k += 1.0;
  }
  return acc;
}

}  // namespace cropdg
