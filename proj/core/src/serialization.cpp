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

#include "cropdg/serialization.hpp"

#include <algorithm>

#include "cropdg/error.hpp"

namespace cropdg {

StrictObject::StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) throw ConfigError("'" + where_ + "' must be an object");
}

bool StrictObject::has(const std::string& key) const { return j_.contains(key); }

const Json& StrictObject::at(const std::string& key) {
  if (!has(key)) throw ConfigError("missing key '" + where_ + "." + key + "'");
  used_.push_back(key);
  return j_.at(key);
}

void StrictObject::fail(const std::string& key, const std::string& why) const {
  throw ConfigError("invalid value for '" + where_ + "." + key + "': " + why);
}

void StrictObject::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
      throw ConfigError("unknown key '" + where_ + "." + key + "'");
    }
  }
}

Json to_json(const ModelConfig& c) {
  return Json{{"backbone", to_string(c.backbone)},
              {"pretrained", c.pretrained},
              {"pretrained_weights", c.pretrained_weights},
              {"input_size", {c.input_width, c.input_height}},
              {"num_classes", c.num_classes},
              {"norm_variant", to_string(c.norm_variant)},
              {"norm_blocks", c.norm_blocks},
              {"padain_prob", c.padain_prob},
              {"head_channels", c.head_channels}};
}

Json to_json(const AugmentConfig& c) {
  return Json{{"crop_factor_range", {c.crop_factor_range.first, c.crop_factor_range.second}},
              {"flip_prob", c.flip_prob},
              {"greyscale_prob", c.greyscale_prob},
              {"brightness_contrast_max_delta", c.brightness_contrast_max_delta},
              {"output_size", {c.output_width, c.output_height}},
              {"mean", c.mean},
              {"std", c.std}};
}

Json to_json(const LossConfig& c) {
  return Json{{"temperature", c.temperature}, {"kd_weight", c.kd_weight}, {"softmax_axis", to_string(c.softmax_axis)}};
}

Json to_json(const IoUConfig& c) { return Json{{"confidence_threshold", c.confidence_threshold}}; }

Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lr_start", c.lr_start},
              {"lr_end", c.lr_end},
              {"weight_decay", c.weight_decay},
              {"schedule_power", c.schedule_power},
              {"seed", c.seed},
              {"val_fraction", c.val_fraction},
              {"loss", to_json(c.loss)},
              {"model", to_json(c.model)},
              {"augment", to_json(c.augment)},
              {"iou", to_json(c.iou)}};
}

Json to_json(const MethodConfig& c) {
  Json j{{"name", c.name}, {"kind", to_string(c.kind)}, {"blocks", c.blocks}, {"padain_prob", c.padain_prob}};
  if (c.loss) j["loss"] = to_json(*c.loss);
  return j;
}

namespace {

template <typename T>
std::pair<T, T> read_pair(StrictObject& o, const std::string& key, std::pair<T, T> current) {
  if (!o.has(key)) return current;
  const auto& v = o.at(key);
  if (!v.is_array() || v.size() != 2) o.fail(key, "expected a two-element array");
  try {
    return {v[0].get<T>(), v[1].get<T>()};
  } catch (const nlohmann::json::exception& e) {
    o.fail(key, e.what());
  }
}

template <typename Parse>
auto read_enum(StrictObject& o, const std::string& key, Parse parse, decltype(parse(std::string{})) current) {
  if (!o.has(key)) return current;
  std::string s;
  o.read(key, s);
  try {
    return parse(s);
  } catch (const Error& e) {
    o.fail(key, e.what());
  }
}

}  // namespace

ModelConfig model_config_from_json(const Json& j, ModelConfig c, const std::string& where) {
  StrictObject o(j, where);
  c.backbone = read_enum(o, "backbone", parse_backbone, c.backbone);
  o.read("pretrained", c.pretrained);
  o.read("pretrained_weights", c.pretrained_weights);
  std::tie(c.input_width, c.input_height) = read_pair(o, "input_size", std::pair{c.input_width, c.input_height});
  o.read("num_classes", c.num_classes);
  c.norm_variant = read_enum(o, "norm_variant", parse_norm_variant, c.norm_variant);
  o.read("norm_blocks", c.norm_blocks);
  o.read("padain_prob", c.padain_prob);
  o.read("head_channels", c.head_channels);
  o.finish();
  return c;
}

AugmentConfig augment_config_from_json(const Json& j, AugmentConfig c, const std::string& where) {
  StrictObject o(j, where);
  c.crop_factor_range = read_pair(o, "crop_factor_range", c.crop_factor_range);
  o.read("flip_prob", c.flip_prob);
  o.read("greyscale_prob", c.greyscale_prob);
  o.read("brightness_contrast_max_delta", c.brightness_contrast_max_delta);
  std::tie(c.output_width, c.output_height) = read_pair(o, "output_size", std::pair{c.output_width, c.output_height});
  o.read("mean", c.mean);
  o.read("std", c.std);
  o.finish();
  return c;
}

LossConfig loss_config_from_json(const Json& j, LossConfig c, const std::string& where) {
  StrictObject o(j, where);
  o.read("temperature", c.temperature);
  o.read("kd_weight", c.kd_weight);
  c.softmax_axis = read_enum(o, "softmax_axis", parse_softmax_axis, c.softmax_axis);
  o.finish();
  return c;
}

IoUConfig iou_config_from_json(const Json& j, IoUConfig c, const std::string& where) {
  StrictObject o(j, where);
  o.read("confidence_threshold", c.confidence_threshold);
  o.finish();
  return c;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c, const std::string& where) {
  StrictObject o(j, where);
  o.read("batch_size", c.batch_size);
  o.read("epochs", c.epochs);
  o.read("lr_start", c.lr_start);
  o.read("lr_end", c.lr_end);
  o.read("weight_decay", c.weight_decay);
  o.read("schedule_power", c.schedule_power);
  o.read("seed", c.seed);
  o.read("val_fraction", c.val_fraction);
  if (o.has("loss")) c.loss = loss_config_from_json(o.at("loss"), c.loss, where + ".loss");
  if (o.has("model")) c.model = model_config_from_json(o.at("model"), c.model, where + ".model");
  if (o.has("augment")) c.augment = augment_config_from_json(o.at("augment"), c.augment, where + ".augment");
  if (o.has("iou")) c.iou = iou_config_from_json(o.at("iou"), c.iou, where + ".iou");
  o.finish();
  return c;
}

MethodConfig method_config_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) return method_from_name(j.get<std::string>());
  StrictObject o(j, where);
  std::string name;
  o.read("name", name);
  MethodConfig c;
  if (o.has("kind")) {
    c.kind = read_enum(o, "kind", parse_method_kind, c.kind);
  } else if (!name.empty()) {
    c = method_from_name(name);
  } else {
    throw ConfigError("'" + where + "' needs a name or a kind");
  }
  c.name = name.empty() ? to_string(c.kind) : name;
  o.read("blocks", c.blocks);
  o.read("padain_prob", c.padain_prob);
  if (o.has("loss")) c.loss = loss_config_from_json(o.at("loss"), LossConfig{}, where + ".loss");
  o.finish();
  return c;
}

}  // namespace cropdg
