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
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cropdg/datamodel.hpp"
#include "cropdg/evaluate.hpp"
#include "cropdg/train.hpp"

namespace cropdg {

struct BenchmarkResult {
  std::string method;
  std::string target_domain;
  std::uint64_t seed = 0;
  double iou = 0.0;
  bool failed = false;
  std::string error;

  friend bool operator==(const BenchmarkResult&, const BenchmarkResult&) = default;
};

enum class BenchmarkMode { leave_one_out, fixed_sources };

std::string to_string(BenchmarkMode m);
BenchmarkMode parse_benchmark_mode(const std::string& s);

struct BenchmarkSpec {
  std::string name = "benchmark";
  BenchmarkMode mode = BenchmarkMode::leave_one_out;
  std::vector<std::string> domains;        // sources (fixed) or the rotating set (leave-one-out)
  std::vector<std::string> extra_targets;  // fixed_sources only
  std::vector<std::uint64_t> seeds;
  std::vector<MethodConfig> methods;
  std::filesystem::path results_root;  // cells live under results_root/<name>/<method>/<target>/<seed>.json
  // Process-level sharding: this process runs cells whose ordinal % shard_count == shard_index.
  int shard_index = 0;
  int shard_count = 1;

  void validate() const;
};

/// Trains one cell (method, sources, seed) and returns the model to evaluate.
/// Only the task's sources may be read; the target is for bookkeeping.
using CellTrainer = std::function<Predictor(const MethodConfig& method, const DGTask& task, std::uint64_t seed)>;

struct BenchmarkRun {
  std::vector<BenchmarkResult> results;
  int trainings = 0;     // trainer invocations performed by this call
  int failed_cells = 0;  // cells ending in a failure marker
  int missing_cells = 0; // cells not present (other shards, or failures)

  bool complete() const { return failed_cells == 0 && missing_cells == 0; }
};

std::filesystem::path cell_path(const std::filesystem::path& results_root, const std::string& benchmark,
                                 const std::string& method, const std::string& target, std::uint64_t seed);

void write_result(const std::filesystem::path& path, const BenchmarkResult& r);
BenchmarkResult read_result(const std::filesystem::path& path);

/// Collects every cell record under results_root/<benchmark>.
std::vector<BenchmarkResult> load_results(const std::filesystem::path& results_root, const std::string& benchmark);

/// Runs the (method x target x seed) grid, persisting each cell as soon as it
/// finishes and skipping cells that already hold a successful record. A
/// throwing trainer records a failure marker and the grid continues.
BenchmarkRun run_benchmark(const DatasetManifest& manifest, const BenchmarkSpec& spec, const CellTrainer& trainer,
                           const AugmentConfig& preprocessing, const IoUConfig& iou_cfg);

/// Default trainer: train_baseline with `base`, teachers cached on disk
/// under `teacher_cache` keyed by domain, seed and recipe.
CellTrainer default_cell_trainer(const TrainConfig& base, const std::filesystem::path& teacher_cache);

/// Teacher provider backed by checkpoint files; trains on a miss.
TeacherProvider cached_teacher_provider(const std::filesystem::path& cache_dir, int* trained_counter = nullptr);

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample std (n - 1); 0 with a warning for n = 1
  int n = 0;
  bool single_seed = false;
};

struct ReportTable {
  std::vector<std::string> methods;
  std::vector<std::string> targets;
  std::map<std::pair<std::string, std::string>, CellStats> cells;
  // Per method: mean of the per-target means, and mean of the per-target stds.
  std::map<std::string, std::pair<double, double>> average;
  std::vector<std::string> warnings;
  int failed_results = 0;
};

/// Mean and sample std per (method, target) over seeds. Methods are sorted
/// by name; targets follow `target_order` when given, else sorted by name.
ReportTable aggregate(const std::vector<BenchmarkResult>& results, const std::vector<std::string>& target_order = {});

/// Delimiter-separated table, values in percent with two decimals.
std::string format_csv(const ReportTable& table, char delimiter = ',');

/// Human-readable table; best per column in **bold**, second best _underlined_.
std::string format_table(const ReportTable& table);

}  // namespace cropdg
