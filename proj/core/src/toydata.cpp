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

#include "cropdg/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cropdg/checkpoint.hpp"
#include "cropdg/error.hpp"
#include "cropdg/image_io.hpp"
#include "cropdg/seeding.hpp"

namespace cropdg {

namespace fs = std::filesystem;

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::row_of_blobs: return "row_of_blobs";
    case ShapeFamily::tall_column: return "tall_column";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "blob") return ShapeFamily::blob;
  if (s == "row_of_blobs") return ShapeFamily::row_of_blobs;
  if (s == "tall_column") return ShapeFamily::tall_column;
  throw ConfigError("unknown shape family '" + s + "' (expected blob|row_of_blobs|tall_column)");
}

namespace {

void check_range(const ColorRange& r, const std::string& what, const std::string& domain) {
  for (int c = 0; c < 3; ++c) {
    if (!(r.lo[c] >= 0.0 && r.hi[c] <= 1.0 && r.lo[c] <= r.hi[c])) {
      throw ConfigError(domain + ": " + what + " palette must satisfy 0 <= lo <= hi <= 1");
    }
  }
}

}  // namespace

void ToyDomainSpec::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("toy domain needs a plain name");
  check_range(foreground_palette, "foreground", name);
  check_range(background_palette, "background", name);
  check_range(clutter_palette, "clutter", name);
  if (clutter_count < 0) throw ConfigError(name + ": clutter_count must be >= 0");
  if (clutter_count > 0 && clutter_palette.empty()) throw ConfigError(name + ": clutter_count > 0 needs a clutter palette");
  if (!(texture_noise >= 0.0 && texture_noise <= 0.5)) throw ConfigError(name + ": texture_noise must be in [0, 0.5]");
  if (samples < 1) throw ConfigError(name + ": samples must be >= 1");
  if (width < 16 || height < 16) throw ConfigError(name + ": image size must be at least 16x16");
  if (!(min_foreground > 0.0 && min_foreground < max_foreground && max_foreground < 1.0)) {
    throw ConfigError(name + ": foreground band must satisfy 0 < min < max < 1");
  }
}

bool ToyShape::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (c * dx + s * dy) / rx;
  const double v = (-s * dx + c * dy) / ry;
  const double rho = std::sqrt(u * u + v * v);
  const double limit = 1.0 + wobble * std::sin(lobes * std::atan2(v, u) + phase);
  return rho <= limit;
}

Json to_json(const ToySampleParams& p) {
  Json shapes = Json::array();
  for (const auto& s : p.shapes) {
    shapes.push_back({{"cx", s.cx}, {"cy", s.cy}, {"rx", s.rx}, {"ry", s.ry}, {"angle", s.angle},
                      {"wobble", s.wobble}, {"phase", s.phase}, {"lobes", s.lobes}});
  }
  return {{"stem", p.stem}, {"width", p.width}, {"height", p.height}, {"shapes", shapes}};
}

ToySampleParams toy_params_from_json(const Json& j) {
  ToySampleParams p;
  try {
    p.stem = j.at("stem").get<std::string>();
    p.width = j.at("width").get<int>();
    p.height = j.at("height").get<int>();
    for (const auto& s : j.at("shapes")) {
      p.shapes.push_back(ToyShape{s.at("cx").get<double>(), s.at("cy").get<double>(), s.at("rx").get<double>(),
                                  s.at("ry").get<double>(), s.at("angle").get<double>(), s.at("wobble").get<double>(),
                                  s.at("phase").get<double>(), s.at("lobes").get<int>()});
    }
  } catch (const Json::exception& e) {
    throw IntegrityError(std::string("malformed toy parameters: ") + e.what());
  }
  return p;
}

namespace {

std::vector<std::uint8_t> coverage(const std::vector<ToyShape>& shapes, int width, int height) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (const auto& s : shapes) {
        if (s.contains(x + 0.5, y + 0.5)) {
          out[static_cast<std::size_t>(y) * width + x] = 1;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

torch::Tensor render_mask(const ToySampleParams& p) {
  if (p.width <= 0 || p.height <= 0) throw ArgumentError("render_mask: empty image size");
  const auto cov = coverage(p.shapes, p.width, p.height);
  auto t = torch::empty({p.height, p.width}, torch::kFloat32);
  auto* d = t.data_ptr<float>();
  for (std::size_t i = 0; i < cov.size(); ++i) d[i] = cov[i];
  return t;
}

namespace {

using Uniform = std::uniform_real_distribution<double>;

double uni(Rng& rng, double lo, double hi) { return Uniform(lo, hi)(rng); }

std::array<double, 3> draw_color(const ColorRange& r, Rng& rng) {
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = r.lo[k] == r.hi[k] ? r.lo[k] : uni(rng, r.lo[k], r.hi[k]);
  return c;
}

ToyShape wobbly(Rng& rng, double cx, double cy, double rx, double ry, double angle, double max_wobble) {
  ToyShape s{cx, cy, rx, ry, angle, uni(rng, 0.0, max_wobble), uni(rng, 0.0, 2.0 * std::numbers::pi), 0};
  s.lobes = std::uniform_int_distribution<int>(3, 6)(rng);
  return s;
}

std::vector<ToyShape> draw_foreground(ShapeFamily family, int width, int height, Rng& rng) {
  const double w = width, h = height, m = std::min(w, h);
  std::vector<ToyShape> shapes;
  switch (family) {
    case ShapeFamily::blob:
      shapes.push_back(wobbly(rng, uni(rng, 0.3, 0.7) * w, uni(rng, 0.3, 0.7) * h, uni(rng, 0.18, 0.36) * m,
                              uni(rng, 0.18, 0.36) * m, uni(rng, 0.0, std::numbers::pi), 0.15));
      break;
    case ShapeFamily::row_of_blobs: {
      const int n = std::uniform_int_distribution<int>(2, 4)(rng);
      const double row = uni(rng, 0.35, 0.65) * h;
      const double pitch = w / n;
      for (int i = 0; i < n; ++i) {
        shapes.push_back(wobbly(rng, (i + 0.5 + uni(rng, -0.1, 0.1)) * pitch, row + uni(rng, -0.05, 0.05) * h,
                                uni(rng, 0.3, 0.42) * pitch, uni(rng, 0.3, 0.42) * pitch * uni(rng, 0.8, 1.3),
                                uni(rng, 0.0, std::numbers::pi), 0.1));
      }
      break;
    }
    case ShapeFamily::tall_column: {
      const int n = std::uniform_int_distribution<int>(1, 2)(rng);
      for (int i = 0; i < n; ++i) {
        shapes.push_back(wobbly(rng, (i + 0.5) * w / n + uni(rng, -0.08, 0.08) * w, uni(rng, 0.45, 0.6) * h,
                                uni(rng, 0.08, 0.14) * w, uni(rng, 0.32, 0.45) * h, uni(rng, -0.15, 0.15), 0.08));
      }
      break;
    }
  }
  return shapes;
}

struct Rendered {
  torch::Tensor image;
  ToySampleParams params;
};

Rendered render_sample(const ToyDomainSpec& spec, std::int64_t index, std::uint64_t seed) {
  std::ostringstream stem;
  stem << std::setw(4) << std::setfill('0') << index;
  auto rng = make_rng(seed, "toy/" + spec.name + "/" + stem.str());

  ToySampleParams params{stem.str(), spec.width, spec.height, {}};
  std::vector<std::uint8_t> fg;
  constexpr int kMaxAttempts = 500;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxAttempts) {
      throw ConfigError(spec.name + ": could not place foreground inside the configured fraction band");
    }
    params.shapes = draw_foreground(spec.shape_family, spec.width, spec.height, rng);
    fg = coverage(params.shapes, spec.width, spec.height);
    const double frac = std::count(fg.begin(), fg.end(), 1) / static_cast<double>(fg.size());
    if (frac >= spec.min_foreground && frac <= spec.max_foreground) break;
  }

  const auto bg_color = draw_color(spec.background_palette, rng);
  const auto fg_color = draw_color(spec.foreground_palette, rng);
  std::vector<ToyShape> clutter;
  std::vector<std::array<double, 3>> clutter_colors;
  const double m = std::min(spec.width, spec.height);
  for (int i = 0; i < spec.clutter_count; ++i) {
    clutter.push_back(wobbly(rng, uni(rng, 0.0, spec.width), uni(rng, 0.0, spec.height), uni(rng, 0.04, 0.1) * m,
                             uni(rng, 0.04, 0.1) * m, uni(rng, 0.0, std::numbers::pi), 0.2));
    clutter_colors.push_back(draw_color(spec.clutter_palette, rng));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  const int W = spec.width, H = spec.height;
  auto image = torch::empty({3, H, W}, torch::kFloat32);
  auto acc = image.accessor<float, 3>();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      std::array<double, 3> c = bg_color;
      if (fg[static_cast<std::size_t>(y) * W + x]) {
        c = fg_color;
      } else {
        for (std::size_t k = 0; k < clutter.size(); ++k) {
          if (clutter[k].contains(x + 0.5, y + 0.5)) c = clutter_colors[k];
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        acc[ch][y][x] = static_cast<float>(std::clamp(c[ch] + spec.texture_noise * noise(rng), 0.0, 1.0));
      }
    }
  }
  return {image, params};
}

}  // namespace

DatasetManifest generate_toy_manifest(const std::vector<ToyDomainSpec>& specs, const fs::path& root,
                                      std::uint64_t seed) {
  if (specs.empty()) throw ArgumentError("generate_toy_manifest needs at least one domain spec");
  std::set<std::string> names;
  for (const auto& s : specs) {
    s.validate();
    if (!names.insert(s.name).second) throw ConfigError("duplicate toy domain '" + s.name + "'");
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

  for (const auto& spec : specs) {
    const auto dir = root / spec.name;
    std::string params_lines, variants;
    for (std::int64_t i = 0; i < spec.samples; ++i) {
      auto r = render_sample(spec, i, seed);
      write_rgb(dir / "images" / (r.params.stem + ".png"), r.image);
      write_mask(dir / "masks" / (r.params.stem + ".png"), render_mask(r.params));
      params_lines += to_json(r.params).dump() + "\n";
      variants += r.params.stem + (spec.clutter_count > 0 ? " cluttered\n" : " plain\n");
    }
    write_file_atomic(dir / "params.jsonl", params_lines);
    write_file_atomic(dir / "variants", variants);
    DomainDescriptor d{spec.name, spec.samples, SourceType::synthetic, spec.category, spec.height_m};
    write_file_atomic(dir / "meta", format_meta(d));
  }
  return load_manifest(root, ManifestCheck::paths);
}

std::vector<ToySampleParams> read_toy_params(const fs::path& domain_dir) {
  std::ifstream in(domain_dir / "params.jsonl");
  if (!in) throw IoError("cannot read " + (domain_dir / "params.jsonl").string());
  std::vector<ToySampleParams> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw IntegrityError("malformed line in " + (domain_dir / "params.jsonl").string() + ": " + e.what());
    }
    out.push_back(toy_params_from_json(j));
  }
  return out;
}

std::vector<ToyDomainSpec> default_toy_specs(std::int64_t samples, int size) {
  auto range = [](std::array<double, 3> lo, std::array<double, 3> hi) { return ColorRange{lo, hi}; };
  std::vector<ToyDomainSpec> specs(4);

  specs[0].name = "grassland";
  specs[0].shape_family = ShapeFamily::blob;
  specs[0].foreground_palette = range({0.15, 0.35, 0.1}, {0.25, 0.45, 0.18});
  specs[0].background_palette = range({0.4, 0.28, 0.16}, {0.5, 0.36, 0.22});
  specs[0].clutter_palette = range({0.45, 0.7, 0.3}, {0.55, 0.8, 0.4});
  specs[0].clutter_count = 6;
  specs[0].category = Category::low;
  specs[0].height_m = 0.2;

  specs[1].name = "lettuce";
  specs[1].shape_family = ShapeFamily::blob;
  specs[1].foreground_palette = range({0.45, 0.7, 0.3}, {0.55, 0.8, 0.4});
  specs[1].background_palette = range({0.3, 0.22, 0.14}, {0.38, 0.28, 0.2});
  specs[1].category = Category::low;
  specs[1].height_m = 0.3;

  specs[2].name = "maize";
  specs[2].shape_family = ShapeFamily::tall_column;
  specs[2].foreground_palette = range({0.4, 0.55, 0.1}, {0.5, 0.65, 0.2});
  specs[2].background_palette = range({0.55, 0.7, 0.85}, {0.65, 0.8, 0.95});
  specs[2].texture_noise = 0.05;
  specs[2].category = Category::tall;
  specs[2].height_m = 2.0;

  specs[3].name = "vineyard";
  specs[3].shape_family = ShapeFamily::row_of_blobs;
  specs[3].foreground_palette = range({0.2, 0.5, 0.2}, {0.3, 0.6, 0.28});
  specs[3].background_palette = range({0.5, 0.48, 0.42}, {0.6, 0.56, 0.5});
  specs[3].clutter_palette = range({0.35, 0.3, 0.25}, {0.42, 0.36, 0.3});
  specs[3].clutter_count = 3;
  specs[3].category = Category::medium;
  specs[3].height_m = 1.2;

  for (auto& s : specs) {
    s.samples = samples;
    s.width = size;
    s.height = size;
  }
  return specs;
}

namespace {

Json to_json(const ColorRange& r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

ColorRange range_from_json(const Json& j, const std::string& where) {
  StrictObject o(j, where);
  ColorRange r;
  o.read("lo", r.lo);
  o.read("hi", r.hi);
  o.finish();
  return r;
}

}  // namespace

Json to_json(const ToyDomainSpec& s) {
  Json j{{"name", s.name},
         {"shape_family", to_string(s.shape_family)},
         {"foreground_palette", to_json(s.foreground_palette)},
         {"background_palette", to_json(s.background_palette)},
         {"clutter_palette", to_json(s.clutter_palette)},
         {"clutter_count", s.clutter_count},
         {"texture_noise", s.texture_noise},
         {"samples", s.samples},
         {"image_size", {s.width, s.height}},
         {"category", to_string(s.category)},
         {"height_m", s.height_m ? Json(*s.height_m) : Json(nullptr)},
         {"foreground_band", {s.min_foreground, s.max_foreground}}};
  return j;
}

ToyDomainSpec toy_spec_from_json(const Json& j, const std::string& where) {
  StrictObject o(j, where);
  ToyDomainSpec s;
  o.read("name", s.name);
  std::string text;
  if (o.has("shape_family")) {
    o.read("shape_family", text);
    s.shape_family = parse_shape_family(text);
  }
  if (o.has("foreground_palette")) s.foreground_palette = range_from_json(o.at("foreground_palette"), where + ".foreground_palette");
  if (o.has("background_palette")) s.background_palette = range_from_json(o.at("background_palette"), where + ".background_palette");
  if (o.has("clutter_palette")) s.clutter_palette = range_from_json(o.at("clutter_palette"), where + ".clutter_palette");
  o.read("clutter_count", s.clutter_count);
  o.read("texture_noise", s.texture_noise);
  o.read("samples", s.samples);
  if (o.has("image_size")) {
    std::array<int, 2> size{};
    o.read("image_size", size);
    s.width = size[0];
    s.height = size[1];
  }
  if (o.has("category")) {
    o.read("category", text);
    s.category = parse_category(text);
  }
  if (o.has("height_m") && !o.at("height_m").is_null()) {
    double h = 0;
    o.read("height_m", h);
    s.height_m = h;
  }
  if (o.has("foreground_band")) {
    std::array<double, 2> band{};
    o.read("foreground_band", band);
    s.min_foreground = band[0];
    s.max_foreground = band[1];
  }
  o.finish();
  s.validate();
  return s;
}

}  // namespace cropdg
