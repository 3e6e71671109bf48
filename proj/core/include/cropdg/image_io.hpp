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

#include <filesystem>

#include <torch/torch.h>

namespace cropdg {

// PNG codec. Images are float tensors laid out [3, H, W] with values in
// [0, 1]; masks are [H, W] float tensors with values in {0, 1} and are
// stored as 8-bit single channel {0, 255}.

torch::Tensor read_rgb(const std::filesystem::path& path);
torch::Tensor read_mask(const std::filesystem::path& path);

void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);
void write_mask(const std::filesystem::path& path, const torch::Tensor& mask);

/// Writes an [H, W] map in [0, 1] as an 8-bit greyscale PNG (no thresholding).
void write_grey(const std::filesystem::path& path, const torch::Tensor& map);

}  // namespace cropdg
