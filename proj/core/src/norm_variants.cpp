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

#include "cropdg/norm_variants.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "cropdg/error.hpp"

namespace cropdg {

namespace {

void check_nchw(const torch::Tensor& x, const char* op) {
  if (x.dim() != 4) throw ShapeError(std::string(op) + " expects [B, C, H, W]");
}

}  // namespace

torch::Tensor unistyle_whiten(const torch::Tensor& features) {
  check_nchw(features, "unistyle_whiten");
  auto mean = features.mean({2, 3}, /*keepdim=*/true);
  auto var = features.var({2, 3}, /*unbiased=*/false, /*keepdim=*/true);
  return (features - mean) / torch::sqrt(var + kNormEps);
}

torch::Tensor padain_swap_with(const torch::Tensor& features, std::span<const std::int64_t> perm) {
  check_nchw(features, "padain_swap");
  const auto b = features.size(0);
  if (static_cast<std::int64_t>(perm.size()) != b) throw ShapeError("permutation length differs from batch size");
  std::vector<std::int64_t> sorted(perm.begin(), perm.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::int64_t i = 0; i < b; ++i) {
    if (sorted[i] != i) throw ArgumentError("padain_swap needs a permutation of the batch indices");
  }
  auto mean = features.mean({2, 3}, true);
  auto std = torch::sqrt(features.var({2, 3}, false, true) + kNormEps);
  auto index = torch::tensor(std::vector<std::int64_t>(perm.begin(), perm.end()), torch::kLong);
  return (features - mean) / std * std.index_select(0, index) + mean.index_select(0, index);
}

torch::Tensor padain_swap(const torch::Tensor& features, double prob, Rng& rng) {
  check_nchw(features, "padain_swap");
  const bool fire = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob;
  const auto b = features.size(0);
  if (!fire || b < 2) return features;
  std::vector<std::int64_t> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return padain_swap_with(features, perm);
}

torch::Tensor PermutedAdaINImpl::forward(const torch::Tensor& x) {
  if (!is_training() || prob_ <= 0.0) return x;
  return padain_swap(x, prob_, *rng_);
}

IBNormImpl::IBNormImpl(std::int64_t channels) : half_(channels / 2) {
  if (half_ < 1) throw ConfigError("IBN needs at least 2 channels");
  in_ = register_module("in", torch::nn::InstanceNorm2d(
                                  torch::nn::InstanceNorm2dOptions(half_).affine(true).eps(kNormEps)));
  bn_ = register_module("bn", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(channels - half_).eps(kNormEps)));
}

torch::Tensor IBNormImpl::forward(const torch::Tensor& x) {
  auto parts = x.split_with_sizes({half_, x.size(1) - half_}, 1);
  return torch::cat({in_->forward(parts[0]), bn_->forward(parts[1])}, 1);
}

}  // namespace cropdg
