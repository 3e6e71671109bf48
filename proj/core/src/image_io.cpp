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

#include "cropdg/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cropdg/error.hpp"

namespace cropdg {

namespace fs = std::filesystem;

namespace {

cv::Mat to_u8(const torch::Tensor& hw_or_chw, bool bgr) {
  auto t = hw_or_chw.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0);
  t = t.mul(255.0).round().to(torch::kUInt8);
  if (t.dim() == 3) {
    if (bgr) t = t.flip({0});
    t = t.permute({1, 2, 0});
  }
  t = t.contiguous();
  const int rows = static_cast<int>(t.size(0));
  const int cols = static_cast<int>(t.size(1));
  const int type = t.dim() == 3 ? CV_8UC3 : CV_8UC1;
  return cv::Mat(rows, cols, type, t.data_ptr<std::uint8_t>()).clone();
}

void write_png(const fs::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace

torch::Tensor read_rgb(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IntegrityError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0).contiguous();
}

torch::Tensor read_mask(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IntegrityError("cannot decode mask " + path.string());
  if (m.channels() != 1 || m.depth() != CV_8U) {
    throw IntegrityError("mask is not 8-bit single channel: " + path.string());
  }
  auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
  auto non_binary = t.ne(0).logical_and(t.ne(255));
  if (non_binary.any().item<bool>()) {
    throw IntegrityError("mask has values other than {0, 255}: " + path.string());
  }
  return t.eq(255).to(torch::kFloat32);
}

void write_rgb(const fs::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("write_rgb expects [3, H, W]");
  write_png(path, to_u8(image, true));
}

void write_mask(const fs::path& path, const torch::Tensor& mask) {
  if (mask.dim() != 2) throw ShapeError("write_mask expects [H, W]");
  write_png(path, to_u8(mask.gt(0.5).to(torch::kFloat32), false));
}

void write_grey(const fs::path& path, const torch::Tensor& map) {
  if (map.dim() != 2) throw ShapeError("write_grey expects [H, W]");
  write_png(path, to_u8(map, false));
}

}  // namespace cropdg
