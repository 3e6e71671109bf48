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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cropdg/datamodel.hpp"
#include "cropdg/serialization.hpp"

namespace cropdg {

enum class ShapeFamily { blob, row_of_blobs, tall_column };

std::string to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

/// Axis-aligned RGB box; colors are drawn uniformly inside it.
struct ColorRange {
  std::array<double, 3> lo{0.0, 0.0, 0.0};
  std::array<double, 3> hi{0.0, 0.0, 0.0};
  bool empty() const { return lo == hi && lo == std::array<double, 3>{0.0, 0.0, 0.0}; }
  friend bool operator==(const ColorRange&, const ColorRange&) = default;
};

struct ToyDomainSpec {
  std::string name;
  ShapeFamily shape_family = ShapeFamily::blob;
  ColorRange foreground_palette;
  ColorRange background_palette;
  ColorRange clutter_palette;  // empty: no background clutter
  int clutter_count = 0;
  double texture_noise = 0.03;
  std::int64_t samples = 50;
  int width = 64;
  int height = 64;
  Category category = Category::any;
  std::optional<double> height_m;
  double min_foreground = 0.05;
  double max_foreground = 0.6;

  void validate() const;
  friend bool operator==(const ToyDomainSpec&, const ToyDomainSpec&) = default;
};

/// One foreground or clutter element: a rotated ellipse with a radial wobble.
struct ToyShape {
  double cx = 0, cy = 0, rx = 1, ry = 1, angle = 0;
  double wobble = 0, phase = 0;
  int lobes = 0;
  bool contains(double x, double y) const;
};

/// Everything needed to re-derive a sample's mask.
struct ToySampleParams {
  std::string stem;
  int width = 0;
  int height = 0;
  std::vector<ToyShape> shapes;
};

Json to_json(const ToySampleParams& p);
ToySampleParams toy_params_from_json(const Json& j);

/// [H, W] float mask in {0, 1}; a pixel is foreground when its centre lies
/// inside any shape.
torch::Tensor render_mask(const ToySampleParams& p);

/// Writes `root/<name>/{images,masks,meta,variants,params.jsonl}` for every
/// spec and returns the loaded manifest. Output bytes depend only on
/// (specs, seed).
DatasetManifest generate_toy_manifest(const std::vector<ToyDomainSpec>& specs, const std::filesystem::path& root,
                                      std::uint64_t seed);

/// Reads `root/<domain>/params.jsonl` back.
std::vector<ToySampleParams> read_toy_params(const std::filesystem::path& domain_dir);

/// Four domains with distinct styles; `grassland`'s clutter matches the
/// foreground of `lettuce`.
std::vector<ToyDomainSpec> default_toy_specs(std::int64_t samples = 50, int size = 64);

Json to_json(const ToyDomainSpec& s);
ToyDomainSpec toy_spec_from_json(const Json& j, const std::string& where);

}  // namespace cropdg
