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

#include "cropdg/distill.hpp"

#include <cmath>

#include "cropdg/error.hpp"

namespace cropdg {

using torch::autograd::AutogradContext;
using torch::autograd::tensor_list;

std::string to_string(SoftmaxAxis a) { return a == SoftmaxAxis::spatial ? "spatial" : "channel"; }

SoftmaxAxis parse_softmax_axis(const std::string& s) {
  if (s == "spatial") return SoftmaxAxis::spatial;
  if (s == "channel") return SoftmaxAxis::channel;
  throw ConfigError("unknown softmax axis '" + s + "' (expected spatial|channel)");
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
  if (!(kd_weight >= 0.0) || !std::isfinite(kd_weight)) throw ConfigError("kd_weight must be >= 0");
}

namespace {

// Teacher probabilities below this contribute nothing to the divergence.
constexpr double kProbFloor = 1e-12;

void check_logits(const torch::Tensor& t, const char* what) {
  if (!t.defined() || t.dim() != 4) throw ShapeError(std::string(what) + " must be a [B, C, H, W] tensor");
  if (!torch::isfinite(t).all().item<bool>()) throw NumericError(std::string(what) + " contains non-finite values");
}

void check_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ArgumentError("temperature must be > 0");
}

void check_pair(const torch::Tensor& teacher, const torch::Tensor& student) {
  check_logits(student, "student logits");
  check_logits(teacher, "teacher logits");
  if (teacher.sizes() != student.sizes()) {
    throw ShapeError("teacher " + c10::str(teacher.sizes()) + " and student " + c10::str(student.sizes()) +
                     " logits differ in shape");
  }
}

// KL(p_t || p_s) summed along `dim` of the [.., N] views, where p = softmax(x / tau).
// Forward returns scale * tau * sum(KL); backward is the closed form
// scale * (p_s * sum(w) - w) with w the floored teacher probabilities.
struct SoftmaxKL : public torch::autograd::Function<SoftmaxKL> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& student, const torch::Tensor& teacher,
                               double tau, double scale, int64_t dim) {
    auto log_ps = torch::log_softmax(student / tau, dim);
    auto log_pt = torch::log_softmax(teacher.detach() / tau, dim);
    auto pt = log_pt.exp();
    auto w = torch::where(pt >= kProbFloor, pt, torch::zeros_like(pt));
    auto kl = (w * (torch::where(pt >= kProbFloor, log_pt, torch::zeros_like(log_pt)) - log_ps)).sum();
    ctx->save_for_backward({log_ps, w});
    ctx->saved_data["scale"] = scale;
    ctx->saved_data["dim"] = dim;
    return kl * (scale * tau);
  }

  static tensor_list backward(AutogradContext* ctx, tensor_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& log_ps = saved[0];
    const auto& w = saved[1];
    const double scale = ctx->saved_data["scale"].toDouble();
    const int64_t dim = ctx->saved_data["dim"].toInt();
    auto grad = (log_ps.exp() * w.sum(dim, true) - w) * scale;
    return {grad * grad_outputs[0], torch::Tensor(), torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

struct BinaryCrossEntropy : public torch::autograd::Function<BinaryCrossEntropy> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& logits, const torch::Tensor& target) {
    auto per_pixel = logits.clamp_min(0) - logits * target + torch::log1p(torch::exp(-logits.abs()));
    ctx->save_for_backward({logits, target});
    return per_pixel.mean();
  }

  static tensor_list backward(AutogradContext* ctx, tensor_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& logits = saved[0];
    const auto& target = saved[1];
    auto grad = (torch::sigmoid(logits) - target) / static_cast<double>(logits.numel());
    return {grad * grad_outputs[0], torch::Tensor()};
  }
};

}  // namespace

EnsembleOutput ensemble_teachers(std::span<const torch::Tensor> teacher_logits) {
  if (teacher_logits.empty()) throw ArgumentError("ensemble needs at least one teacher");
  const auto& first = teacher_logits.front();
  std::vector<torch::Tensor> parts;
  parts.reserve(teacher_logits.size());
  for (const auto& t : teacher_logits) {
    if (!t.defined() || t.sizes() != first.sizes()) throw ShapeError("teacher logits differ in shape");
    parts.push_back(t.detach().to(torch::kFloat64));
  }
  auto stacked = std::get<0>(torch::stack(parts).sort(0));
  const auto d = static_cast<std::int64_t>(parts.size());
  auto mean = (stacked.sum(0) / static_cast<double>(d)).to(first.scalar_type());
  return EnsembleOutput{mean, d};
}

torch::Tensor spatial_softmax(const torch::Tensor& logits, double temperature) {
  check_logits(logits, "logits");
  check_temperature(temperature);
  const auto s = logits.sizes();
  return torch::softmax(logits.reshape({s[0], s[1], -1}) / temperature, -1).reshape(s);
}

torch::Tensor channel_softmax(const torch::Tensor& logits, double temperature) {
  check_logits(logits, "logits");
  check_temperature(temperature);
  if (logits.size(1) < 2) {
    throw ConfigError("channel softmax is undefined for a single output channel; use the spatial formulation");
  }
  return torch::softmax(logits / temperature, 1);
}

torch::Tensor kd_loss_spatial(const torch::Tensor& teacher, const torch::Tensor& student, double temperature) {
  check_pair(teacher, student);
  check_temperature(temperature);
  const auto b = student.size(0);
  const auto c = student.size(1);
  const double scale = temperature / static_cast<double>(c * b);
  auto s = student.reshape({b, c, -1});
  auto t = teacher.reshape({b, c, -1});
  return SoftmaxKL::apply(s, t, temperature, scale, int64_t{-1});
}

torch::Tensor kd_loss_spatial(const EnsembleOutput& teacher, const torch::Tensor& student, double temperature) {
  return kd_loss_spatial(teacher.values, student, temperature);
}

torch::Tensor kd_loss_channel(const torch::Tensor& teacher, const torch::Tensor& student, double temperature) {
  check_pair(teacher, student);
  check_temperature(temperature);
  if (student.size(1) < 2) {
    throw ConfigError("channel-softmax distillation needs C >= 2; binary masks use the spatial formulation");
  }
  const auto positions = student.size(0) * student.size(2) * student.size(3);
  const double scale = temperature / static_cast<double>(positions);
  return SoftmaxKL::apply(student, teacher, temperature, scale, int64_t{1});
}

torch::Tensor kd_loss_channel(const EnsembleOutput& teacher, const torch::Tensor& student, double temperature) {
  return kd_loss_channel(teacher.values, student, temperature);
}

torch::Tensor bce_loss(const torch::Tensor& mask, const torch::Tensor& student) {
  check_logits(student, "student logits");
  if (student.size(1) != 1) throw ShapeError("binary cross-entropy expects single-channel logits");
  auto target = mask.dim() == 3 ? mask.unsqueeze(1) : mask;
  if (target.sizes() != student.sizes()) {
    throw ShapeError("mask " + c10::str(mask.sizes()) + " does not match logits " + c10::str(student.sizes()));
  }
  if (target.ne(0).logical_and(target.ne(1)).any().item<bool>()) throw ArgumentError("mask is not binary");
  return BinaryCrossEntropy::apply(student, target.to(student.scalar_type()).detach());
}

LossBreakdown total_loss(const torch::Tensor& mask, const EnsembleOutput& teacher, const torch::Tensor& student,
                         const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.ce = bce_loss(mask, student);
  out.kd = cfg.softmax_axis == SoftmaxAxis::spatial ? kd_loss_spatial(teacher, student, cfg.temperature)
                                                    : kd_loss_channel(teacher, student, cfg.temperature);
  out.total = cfg.kd_weight == 0.0 ? out.ce : out.ce + cfg.kd_weight * out.kd;
  return out;
}

}  // namespace cropdg
