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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cropdg/augment.hpp"
#include "cropdg/datamodel.hpp"
#include "cropdg/distill.hpp"
#include "cropdg/evaluate.hpp"
#include "cropdg/network.hpp"

namespace cropdg {

struct TrainConfig {
  std::int64_t batch_size = 64;
  int epochs = 50;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double weight_decay = 1e-5;
  double schedule_power = 1.0;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  LossConfig loss;
  ModelConfig model;
  AugmentConfig augment;
  IoUConfig iou;
  // Append-only JSON-lines log, one record per epoch. Empty disables it.
  std::string log_path;

  void validate() const;
};

/// lr_end + (lr_start - lr_end) * (1 - step / total_steps)^power; both
/// endpoints are returned exactly.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double ce_loss = 0.0;
  double kd_loss = 0.0;
  double val_iou = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  std::vector<double> step_losses;
  std::vector<double> step_kd;
};

/// Epoch with the highest validation IoU; the earliest one on ties.
int select_best_epoch(const std::vector<EpochRecord>& epochs);

/// Test and instrumentation hooks. All optional.
struct TrainHooks {
  std::function<double(int epoch, double measured_iou)> val_iou_override;
  std::function<void(int epoch, SegmentationNet& model)> on_epoch_end;
  std::function<void(std::int64_t step, SegmentationNet& model)> on_step_end;
};

struct TrainResult {
  SegmentationNet model{nullptr};
  TrainHistory history;
};

/// Pooled-source empirical risk minimization with AdamW, the polynomial
/// schedule and best-validation-IoU model selection. Non-finite losses raise
/// DivergenceError naming the epoch and step.
TrainResult train_erm(const std::vector<DomainDataset>& sources, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct Teacher {
  std::string domain;
  SegmentationNet model{nullptr};
  TrainHistory history;
};

/// One ERM model per source domain, in source order.
std::vector<Teacher> train_teachers(const std::vector<DomainDataset>& sources, const TrainConfig& cfg,
                                    const TrainHooks& hooks = {});

/// Student trained with L_CE + lambda * L_KD against the ensembled teachers,
/// which see the same augmented batch in inference mode and are never updated.
TrainResult train_student(const std::vector<DomainDataset>& sources, std::span<const SegmentationNet> teachers,
                          const TrainConfig& cfg, const TrainHooks& hooks = {});

enum class MethodKind {
  erm,
  ibn,
  padain,
  unistyle,
  ensemble_kd,
  ensemble_kd_unistyle,
  // Ablation: the ensemble is made of ERM models trained on all sources.
  ensemble_kd_erm_teachers,
};

std::string to_string(MethodKind k);
MethodKind parse_method_kind(const std::string& s);
const std::vector<std::string>& method_kind_names();

struct MethodConfig {
  std::string name;  // label used in results and tables
  MethodKind kind = MethodKind::erm;
  std::vector<int> blocks{0, 1, 2};  // IBN / UniStyle blocks
  double padain_prob = 1e-3;
  std::optional<LossConfig> loss;  // overrides TrainConfig::loss for KD methods

  bool uses_teachers() const;
  void validate() const;
};

MethodConfig method_from_name(const std::string& name);

/// Student-side train config for a method (norm variant, pAdaIN, loss).
TrainConfig method_train_config(const MethodConfig& method, const TrainConfig& cfg);

/// Config teachers are trained with: the shared recipe with a plain model.
TrainConfig teacher_train_config(const TrainConfig& cfg);

/// Supplies the teacher for one source domain (lets callers cache them).
using TeacherProvider = std::function<SegmentationNet(const DomainDataset& source, const TrainConfig& teacher_cfg)>;

/// Dispatches a method to model construction and the right trainer.
TrainResult train_baseline(const MethodConfig& method, const std::vector<DomainDataset>& sources,
                           const TrainConfig& cfg, const TeacherProvider& teachers = {}, const TrainHooks& hooks = {});

}  // namespace cropdg
