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

// Shared fixtures and independent reference implementations for the tests.
// The oracles below work on plain std::vector<double> with scalar loops and
// never call into the library under test.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cropdg/toydata.hpp"
#include "cropdg/train.hpp"

namespace cropdg::testing {

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

struct Dims {
  std::int64_t b, c, h, w;
  std::int64_t at(std::int64_t bi, std::int64_t ci, std::int64_t i) const { return (bi * c + ci) * h * w + i; }
};

/// tau^2 / (C * B) * sum_{b,c} sum_i p_t log(p_t / p_s), softmax over the H*W positions.
inline double oracle_kd_spatial(const std::vector<double>& t, const std::vector<double>& s, Dims d, double tau) {
  const std::int64_t n = d.h * d.w;
  double total = 0.0;
  for (std::int64_t b = 0; b < d.b; ++b) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      double mt = -INFINITY, ms = -INFINITY;
      for (std::int64_t i = 0; i < n; ++i) {
        mt = std::max(mt, t[d.at(b, c, i)] / tau);
        ms = std::max(ms, s[d.at(b, c, i)] / tau);
      }
      double zt = 0.0, zs = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        zt += std::exp(t[d.at(b, c, i)] / tau - mt);
        zs += std::exp(s[d.at(b, c, i)] / tau - ms);
      }
      for (std::int64_t i = 0; i < n; ++i) {
        const double lpt = t[d.at(b, c, i)] / tau - mt - std::log(zt);
        const double lps = s[d.at(b, c, i)] / tau - ms - std::log(zs);
        total += std::exp(lpt) * (lpt - lps);
      }
    }
  }
  return tau * tau * total / static_cast<double>(d.c * d.b);
}

/// tau^2 / (B * H * W) * sum_{b,i} sum_c p_t log(p_t / p_s), softmax over channels.
inline double oracle_kd_channel(const std::vector<double>& t, const std::vector<double>& s, Dims d, double tau) {
  const std::int64_t n = d.h * d.w;
  double total = 0.0;
  for (std::int64_t b = 0; b < d.b; ++b) {
    for (std::int64_t i = 0; i < n; ++i) {
      double mt = -INFINITY, ms = -INFINITY;
      for (std::int64_t c = 0; c < d.c; ++c) {
        mt = std::max(mt, t[d.at(b, c, i)] / tau);
        ms = std::max(ms, s[d.at(b, c, i)] / tau);
      }
      double zt = 0.0, zs = 0.0;
      for (std::int64_t c = 0; c < d.c; ++c) {
        zt += std::exp(t[d.at(b, c, i)] / tau - mt);
        zs += std::exp(s[d.at(b, c, i)] / tau - ms);
      }
      for (std::int64_t c = 0; c < d.c; ++c) {
        const double lpt = t[d.at(b, c, i)] / tau - mt - std::log(zt);
        const double lps = s[d.at(b, c, i)] / tau - ms - std::log(zs);
        total += std::exp(lpt) * (lpt - lps);
      }
    }
  }
  return tau * tau * total / static_cast<double>(d.b * n);
}

/// Mean of -[y log sigmoid(z) + (1 - y) log(1 - sigmoid(z))].
inline double oracle_bce(const std::vector<double>& y, const std::vector<double>& z) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double log_p = z[i] >= 0 ? -std::log1p(std::exp(-z[i])) : z[i] - std::log1p(std::exp(z[i]));
    const double log_q = log_p - z[i];  // log(1 - sigmoid(z))
    total -= y[i] * log_p + (1.0 - y[i]) * log_q;
  }
  return total / static_cast<double>(z.size());
}

/// IoU of two bit masks over `n` pixels; both empty counts as 1.
inline double oracle_iou_bits(unsigned pred, unsigned gt, int n) {
  int inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const bool p = (pred >> i) & 1U, g = (gt >> i) & 1U;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-12, std::max(std::abs(a), std::abs(b))); }

/// Self-deleting scratch directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cropdg-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Default toy domains at a reduced sample count and size.
inline std::vector<ToyDomainSpec> small_toy_specs(std::int64_t samples, int size, std::size_t count = 4) {
  auto specs = default_toy_specs(samples, size);
  specs.resize(count);
  return specs;
}

/// Toy backbone, square inputs of `size`, otherwise the default recipe.
inline TrainConfig toy_train_config(int size, int epochs, std::int64_t batch_size, std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.model.backbone = Backbone::toy;
  cfg.model.input_width = cfg.model.input_height = size;
  cfg.augment.output_width = cfg.augment.output_height = size;
  return cfg;
}

}  // namespace cropdg::testing
