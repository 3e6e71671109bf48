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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cropdg/benchmark.hpp"
#include "cropdg/serialization.hpp"
#include "cropdg/toydata.hpp"
#include "cropdg/train.hpp"

namespace cropdg::cli {

/// Environment variable that overrides `dataset_root` from the file.
inline constexpr const char* kDatasetRootEnv = "CROPDG_DATASET_ROOT";

/// lambda x tau grid for the distillation-weight study.
struct SweepConfig {
  std::vector<double> kd_weights;
  std::vector<double> temperatures;
  std::string base_method = "ensemble_kd";
  bool empty() const { return kd_weights.empty() && temperatures.empty(); }
};

struct ToyConfig {
  std::uint64_t seed = 0;
  std::vector<ToyDomainSpec> domains = default_toy_specs();
};

struct ReportConfig {
  std::string domain;  // defaults to the first target
  int samples = 4;
  // label -> checkpoint path; relative paths resolve against output_dir.
  std::vector<std::pair<std::string, std::string>> checkpoints;
};

struct ExperimentConfig {
  std::string dataset_root;
  std::string output_dir = "run";
  std::vector<std::string> domains;
  std::vector<std::string> extra_targets;
  std::vector<MethodConfig> methods{method_from_name("erm"), method_from_name("ensemble_kd")};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string benchmark_name = "main";
  BenchmarkMode mode = BenchmarkMode::leave_one_out;
  TrainConfig train;
  SweepConfig sweep;
  ToyConfig toy;
  ReportConfig report;

  /// Checks everything that can be checked without touching the dataset.
  void validate() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Methods of the run with the sweep grid appended (one per lambda, tau pair).
std::vector<MethodConfig> expanded_methods(const ExperimentConfig& c);
std::string sweep_method_name(const SweepConfig& s, double kd_weight, double temperature);

/// Fixed run-directory layout.
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path results() const { return root / "results"; }
  std::filesystem::path figures() const { return root / "figures"; }
  std::filesystem::path teachers() const { return checkpoints() / "teachers"; }
};

/// Writes `config.effective.json` into `dir`.
void write_effective_config(const std::filesystem::path& dir, const ExperimentConfig& c);

}  // namespace cropdg::cli
