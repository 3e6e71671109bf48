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

#include "cropdg/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cropdg/error.hpp"

namespace cropdg::cli {

torch::Tensor probability_map(SegmentationNet& model, const torch::Tensor& normalized_image) {
  torch::NoGradGuard guard;
  model->eval();
  return torch::sigmoid(model->forward(normalized_image.unsqueeze(0))).squeeze(0).squeeze(0);
}

torch::Tensor render_panel(const torch::Tensor& image, const std::vector<torch::Tensor>& probabilities) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("render_panel: image must be [3, H, W]");
  std::vector<torch::Tensor> tiles{image.to(torch::kFloat32)};
  for (const auto& p : probabilities) {
    if (p.dim() != 2 || p.size(0) != image.size(1) || p.size(1) != image.size(2)) {
      throw ShapeError("render_panel: probability map must be [H, W] like the image");
    }
    tiles.push_back(p.to(torch::kFloat32).unsqueeze(0).expand({3, -1, -1}));
  }
  return torch::cat(tiles, 2).contiguous();
}

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg, const std::vector<BenchmarkResult>& results) {
  std::vector<SweepPoint> out;
  if (cfg.sweep.empty()) return out;
  for (const auto& m : expanded_methods(cfg)) {
    if (!m.loss) continue;
    if (m.name != sweep_method_name(cfg.sweep, m.loss->kd_weight, m.loss->temperature)) continue;
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results) {
      if (r.method == m.name && !r.failed) {
        sum += r.iou;
        ++n;
      }
    }
    if (n > 0) out.push_back({m.loss->kd_weight, m.loss->temperature, sum / n});
  }
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

SweepPlot sweep_plot(const std::vector<SweepPoint>& points, SweepAxis axis, const std::vector<double>& x_grid,
                     const std::vector<double>& series_grid) {
  if (x_grid.empty()) throw ArgumentError("sweep_plot: empty x grid");
  SweepPlot plot;
  plot.x_ticks = x_grid;
  plot.series_values = series_grid;

  const double width = 480, height = 320, left = 56, right = 110, top = 20, bottom = 48;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const auto x_of = [&](std::size_t i) {
    return x_grid.size() == 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(i) / (x_grid.size() - 1);
  };
  const auto y_of = [&](double iou) { return top + plot_h * (1.0 - std::clamp(iou, 0.0, 1.0)); };
  const std::string x_name = axis == SweepAxis::kd_weight ? "lambda" : "tau";
  const std::string s_name = axis == SweepAxis::kd_weight ? "tau" : "lambda";

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    os << "<text class=\"ytick\" x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << v * 100
       << "</text>\n";
  }
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    os << "<text class=\"xtick\" data-value=\"" << fmt(x_grid[i]) << "\" x=\"" << x_of(i) << "\" y=\""
       << top + plot_h + 16 << "\" text-anchor=\"middle\">" << fmt(x_grid[i]) << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">" << x_name
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 14 " << top + plot_h / 2
     << ")\" text-anchor=\"middle\">IoU (%)</text>\n";

  for (std::size_t s = 0; s < series_grid.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::ostringstream path;
    int drawn = 0;
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
      const auto it = std::find_if(points.begin(), points.end(), [&](const SweepPoint& p) {
        const double x = axis == SweepAxis::kd_weight ? p.kd_weight : p.temperature;
        const double other = axis == SweepAxis::kd_weight ? p.temperature : p.kd_weight;
        return x == x_grid[i] && other == series_grid[s];
      });
      if (it == points.end()) continue;
      path << (drawn++ == 0 ? "M" : " L") << x_of(i) << " " << y_of(it->iou);
      os << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(it->iou) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    if (drawn > 1) os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    os << "<text class=\"series\" x=\"" << left + plot_w + 10 << "\" y=\"" << top + 14 * (s + 1) << "\" fill=\"" << color
       << "\">" << s_name << "=" << fmt(series_grid[s]) << "</text>\n";
  }
  os << "</svg>\n";
  plot.svg = os.str();
  return plot;
}

}  // namespace cropdg::cli
