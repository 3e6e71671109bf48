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

#include "cropdg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cropdg/error.hpp"
#include "cropdg/serialization.hpp"

namespace cropdg {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr_end > 0.0 && lr_start >= lr_end)) throw ConfigError("learning rates must satisfy lr_start >= lr_end > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(schedule_power > 0.0)) throw ConfigError("schedule_power must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  loss.validate();
  model.validate();
  augment.validate();
  iou.validate();
  if (augment.output_width != model.input_width || augment.output_height != model.input_height) {
    throw ConfigError("augment.output_size must equal model.input_size");
  }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0) throw ArgumentError("total_steps must be > 0");
  if (step < 0 || step > total_steps) throw ArgumentError("step outside [0, total_steps]");
  if (step == 0) return cfg.lr_start;
  if (step == total_steps) return cfg.lr_end;
  const double remaining = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.lr_end + (cfg.lr_start - cfg.lr_end) * std::pow(remaining, cfg.schedule_power);
}

int select_best_epoch(const std::vector<EpochRecord>& epochs) {
  int best = -1;
  double best_iou = -1.0;
  for (const auto& e : epochs) {
    if (e.val_iou > best_iou) {
      best_iou = e.val_iou;
      best = e.epoch;
    }
  }
  return best;
}

namespace {

std::vector<Sample> load_all(const std::vector<DomainDataset>& sets) {
  std::vector<Sample> out;
  for (const auto& s : sets) {
    auto part = load_samples(s);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

void append_log(const std::string& path, const EpochRecord& r) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to training log " + path);
  out << Json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"ce", r.ce_loss}, {"kd", r.kd_loss},
              {"val_iou", r.val_iou}, {"lr", r.lr}}
             .dump()
      << "\n";
}

void check_teacher_shapes(std::vector<SegmentationNet>& teachers, SegmentationNet& student, const TrainConfig& cfg) {
  torch::NoGradGuard guard;
  auto probe = torch::zeros({1, 3, cfg.model.input_height, cfg.model.input_width});
  student->eval();
  const auto expected = student->forward(probe).sizes().vec();
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    teachers[i]->eval();
    torch::Tensor out;
    try {
      out = teachers[i]->forward(probe);
    } catch (const Error& e) {
      throw ConfigError("teacher " + std::to_string(i) + " cannot process the student input: " + e.what());
    }
    if (out.sizes().vec() != expected) {
      throw ConfigError("teacher " + std::to_string(i) + " output " + c10::str(out.sizes()) +
                        " does not match the student output " + c10::str(expected));
    }
  }
}

TrainResult run_training(const std::vector<DomainDataset>& sources, std::span<const SegmentationNet> teacher_span,
                         const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (sources.empty()) throw ArgumentError("training needs at least one source domain");
  const auto splits = split_sources(sources, cfg.val_fraction, cfg.seed);
  const auto train_set = load_all(splits.train);
  const auto val_set = load_all(splits.val);

  TrainResult result{build_model(cfg.model, cfg.seed), {}};
  auto& model = result.model;
  std::vector<SegmentationNet> teachers(teacher_span.begin(), teacher_span.end());
  const bool distill = !teachers.empty();
  if (distill) check_teacher_shapes(teachers, model, cfg);

  torch::optim::AdamW optimizer(model->parameters(),
                                torch::optim::AdamWOptions(cfg.lr_start).weight_decay(cfg.weight_decay));

  const auto n = static_cast<std::int64_t>(train_set.size());
  const std::int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
  Rng batch_rng = make_rng(cfg.seed, "batches");
  Rng augment_rng = make_rng(cfg.seed, "augment");
  const auto predictor = make_predictor(model);

  std::vector<torch::Tensor> best_state;
  double best_iou = -1.0;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model->train();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), batch_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_schedule(step, total_steps, cfg);
    double loss_sum = 0.0, ce_sum = 0.0, kd_sum = 0.0;
    for (std::int64_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const double lr = lr_schedule(step, total_steps, cfg);
      for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);

      std::vector<Sample> batch;
      const auto begin = static_cast<std::size_t>(b * cfg.batch_size);
      const auto end = std::min(train_set.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      for (auto i = begin; i < end; ++i) batch.push_back(augment_pipeline(train_set[order[i]], cfg.augment, augment_rng));
      auto [images, masks] = collate(batch);

      auto logits = model->forward(images);
      if (!torch::isfinite(logits).all().item<bool>()) {
        throw DivergenceError("non-finite logits at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      LossBreakdown loss;
      if (distill) {
        std::vector<torch::Tensor> teacher_logits;
        {
          torch::NoGradGuard guard;
          for (auto& t : teachers) teacher_logits.push_back(t->forward(images));
        }
        loss = total_loss(masks, ensemble_teachers(teacher_logits), logits, cfg.loss);
      } else {
        loss.ce = bce_loss(masks, logits);
        loss.total = loss.ce;
      }
      const double total = loss.total.item<double>();
      if (!std::isfinite(total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      optimizer.zero_grad();
      loss.total.backward();
      optimizer.step();

      const double kd = loss.kd.defined() ? loss.kd.item<double>() : 0.0;
      result.history.step_losses.push_back(total);
      result.history.step_kd.push_back(kd);
      loss_sum += total;
      ce_sum += loss.ce.item<double>();
      kd_sum += kd;
      if (hooks.on_step_end) hooks.on_step_end(step, model);
    }
    rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    rec.ce_loss = ce_sum / static_cast<double>(steps_per_epoch);
    rec.kd_loss = kd_sum / static_cast<double>(steps_per_epoch);
    rec.val_iou = evaluate_samples(predictor, val_set, cfg.augment, cfg.iou, cfg.batch_size);
    if (hooks.val_iou_override) rec.val_iou = hooks.val_iou_override(epoch, rec.val_iou);
    result.history.epochs.push_back(rec);
    append_log(cfg.log_path, rec);
    if (rec.val_iou > best_iou) {
      best_iou = rec.val_iou;
      best_state = snapshot_state(*model);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
  }
  result.history.best_epoch = select_best_epoch(result.history.epochs);
  restore_state(*model, best_state);
  model->eval();
  return result;
}

}  // namespace

TrainResult train_erm(const std::vector<DomainDataset>& sources, const TrainConfig& cfg, const TrainHooks& hooks) {
  return run_training(sources, {}, cfg, hooks);
}

std::vector<Teacher> train_teachers(const std::vector<DomainDataset>& sources, const TrainConfig& cfg,
                                    const TrainHooks& hooks) {
  if (sources.empty()) throw ArgumentError("train_teachers needs at least one source domain");
  std::vector<Teacher> out;
  for (const auto& source : sources) {
    TrainConfig tcfg = cfg;
    if (!cfg.log_path.empty()) tcfg.log_path = cfg.log_path + ".teacher-" + source.name();
    auto r = train_erm({source}, tcfg, hooks);
    out.push_back(Teacher{source.name(), r.model, std::move(r.history)});
  }
  return out;
}

TrainResult train_student(const std::vector<DomainDataset>& sources, std::span<const SegmentationNet> teachers,
                          const TrainConfig& cfg, const TrainHooks& hooks) {
  if (teachers.empty()) throw ArgumentError("train_student needs at least one teacher");
  return run_training(sources, teachers, cfg, hooks);
}

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::erm: return "erm";
    case MethodKind::ibn: return "ibn";
    case MethodKind::padain: return "padain";
    case MethodKind::unistyle: return "unistyle";
    case MethodKind::ensemble_kd: return "ensemble_kd";
    case MethodKind::ensemble_kd_unistyle: return "ensemble_kd+unistyle";
    case MethodKind::ensemble_kd_erm_teachers: return "ensemble_kd_erm_teachers";
  }
  return "erm";
}

const std::vector<std::string>& method_kind_names() {
  static const std::vector<std::string> names{"erm",         "ibn",
                                              "padain",      "unistyle",
                                              "ensemble_kd", "ensemble_kd+unistyle",
                                              "ensemble_kd_erm_teachers"};
  return names;
}

MethodKind parse_method_kind(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(MethodKind::ensemble_kd_erm_teachers); ++k) {
    if (to_string(static_cast<MethodKind>(k)) == s) return static_cast<MethodKind>(k);
  }
  if (s == "ensemble_kd_unistyle") return MethodKind::ensemble_kd_unistyle;
  std::string valid;
  for (const auto& n : method_kind_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown method '" + s + "'; valid methods: " + valid);
}

bool MethodConfig::uses_teachers() const {
  return kind == MethodKind::ensemble_kd || kind == MethodKind::ensemble_kd_unistyle ||
         kind == MethodKind::ensemble_kd_erm_teachers;
}

void MethodConfig::validate() const {
  if (name.empty()) throw ConfigError("method needs a name");
  if (name.find('/') != std::string::npos) throw ConfigError("method name must not contain '/'");
  if (!(padain_prob >= 0.0 && padain_prob <= 1.0)) throw ConfigError("padain_prob must lie in [0, 1]");
  if (loss) loss->validate();
}

MethodConfig method_from_name(const std::string& name) {
  MethodConfig m;
  m.kind = parse_method_kind(name);
  m.name = name;
  return m;
}

TrainConfig method_train_config(const MethodConfig& method, const TrainConfig& cfg) {
  TrainConfig out = cfg;
  out.model.norm_variant = NormVariant::none;
  out.model.norm_blocks.clear();
  out.model.padain_prob = 0.0;
  switch (method.kind) {
    case MethodKind::ibn:
      out.model.norm_variant = NormVariant::ibn;
      out.model.norm_blocks = method.blocks;
      break;
    case MethodKind::padain:
      out.model.padain_prob = method.padain_prob;
      break;
    case MethodKind::unistyle:
    case MethodKind::ensemble_kd_unistyle:
      out.model.norm_variant = NormVariant::unistyle;
      out.model.norm_blocks = method.blocks;
      break;
    default:
      break;
  }
  if (method.loss) out.loss = *method.loss;
  return out;
}

TrainConfig teacher_train_config(const TrainConfig& cfg) {
  TrainConfig out = cfg;
  out.model.norm_variant = NormVariant::none;
  out.model.norm_blocks.clear();
  out.model.padain_prob = 0.0;
  return out;
}

TrainResult train_baseline(const MethodConfig& method, const std::vector<DomainDataset>& sources,
                           const TrainConfig& cfg, const TeacherProvider& provider, const TrainHooks& hooks) {
  method.validate();
  const auto student_cfg = method_train_config(method, cfg);
  student_cfg.validate();
  if (!method.uses_teachers()) return train_erm(sources, student_cfg, hooks);

  const auto tcfg = teacher_train_config(cfg);
  std::vector<SegmentationNet> teachers;
  if (method.kind == MethodKind::ensemble_kd_erm_teachers) {
    for (std::size_t d = 0; d < sources.size(); ++d) {
      auto seeded = tcfg;
      seeded.seed = derive_seed(cfg.seed, "erm-teacher/" + std::to_string(d));
      seeded.log_path.clear();
      teachers.push_back(train_erm(sources, seeded).model);
    }
  } else {
    for (const auto& source : sources) {
      if (provider) {
        teachers.push_back(provider(source, tcfg));
      } else {
        auto seeded = tcfg;
        seeded.log_path.clear();
        teachers.push_back(train_erm({source}, seeded).model);
      }
    }
  }
  return train_student(sources, teachers, student_cfg, hooks);
}

}  // namespace cropdg
