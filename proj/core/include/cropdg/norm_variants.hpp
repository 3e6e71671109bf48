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

#include <torch/torch.h>

#include "cropdg/seeding.hpp"

namespace cropdg {

/// Added to every variance denominator.
inline constexpr double kNormEps = 1e-5;

/// Per-instance, per-channel moment removal on [B, C, H, W]: subtracts the
/// spatial mean and divides by sqrt(var + eps). No learned affine.
torch::Tensor unistyle_whiten(const torch::Tensor& features);

/// Re-standardizes instance i to the per-channel mean/std of instance
/// perm[i]. `perm` must be a permutation of [0, B).
torch::Tensor padain_swap_with(const torch::Tensor& features, std::span<const std::int64_t> perm);

/// With probability `prob` draws a uniform batch permutation and applies
/// padain_swap_with; otherwise (or for B < 2) returns the input unchanged.
torch::Tensor padain_swap(const torch::Tensor& features, double prob, Rng& rng);

/// Permuted AdaIN as a layer: active in training mode only.
class PermutedAdaINImpl : public torch::nn::Module {
 public:
  PermutedAdaINImpl(double prob, Rng* rng) : prob_(prob), rng_(rng) {}

  torch::Tensor forward(const torch::Tensor& x);

  double prob() const { return prob_; }

 private:
  double prob_;
  Rng* rng_;
};
TORCH_MODULE(PermutedAdaIN);

/// Instance-batch normalization: the first half of the channels use
/// instance norm (affine), the rest batch norm.
class IBNormImpl : public torch::nn::Module {
 public:
  explicit IBNormImpl(std::int64_t channels);

  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t instance_channels() const { return half_; }

 private:
  std::int64_t half_;
  torch::nn::InstanceNorm2d in_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(IBNorm);

}  // namespace cropdg
