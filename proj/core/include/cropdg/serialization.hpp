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

#include <string>

#include <json.hpp>

#include "cropdg/augment.hpp"
#include "cropdg/distill.hpp"
#include "cropdg/evaluate.hpp"
#include "cropdg/network.hpp"
#include "cropdg/train.hpp"

namespace cropdg {

using Json = nlohmann::ordered_json;

// Config <-> JSON. Readers start from the given defaults, override only the
// keys present and reject unknown keys with a ConfigError naming the path.

Json to_json(const ModelConfig& c);
Json to_json(const AugmentConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const IoUConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const MethodConfig& c);

ModelConfig model_config_from_json(const Json& j, ModelConfig defaults = {}, const std::string& where = "model");
AugmentConfig augment_config_from_json(const Json& j, AugmentConfig defaults = {}, const std::string& where = "augment");
LossConfig loss_config_from_json(const Json& j, LossConfig defaults = {}, const std::string& where = "loss");
IoUConfig iou_config_from_json(const Json& j, IoUConfig defaults = {}, const std::string& where = "iou");
TrainConfig train_config_from_json(const Json& j, TrainConfig defaults = {}, const std::string& where = "train");
MethodConfig method_config_from_json(const Json& j, const std::string& where = "method");

/// Tracks which keys of a JSON object were consumed so leftovers can be rejected.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where);

  bool has(const std::string& key) const;
  const Json& at(const std::string& key);
  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, e.what());
    }
  }
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
  /// Throws ConfigError listing keys that were never read.
  void finish() const;
  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
  std::vector<std::string> used_;
};

}  // namespace cropdg
