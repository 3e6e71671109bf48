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
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "cropdg/cli/experiment.hpp"

namespace cropdg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIntegrity = 3,
  kExitDivergence = 4,
  kExitPartial = 5,
};

int exit_code_for(const std::exception& e) noexcept;

/// Order-stable hash of every file below `dir` (relative path and bytes),
/// ignoring `config.effective.json`.
std::uint64_t tree_hash(const std::filesystem::path& dir);

int cmd_make_toy(const ExperimentConfig& cfg, std::ostream& out);

struct TrainRequest {
  std::string method;
  std::optional<std::string> target;
  std::optional<std::uint64_t> seed;
};
int cmd_train(const ExperimentConfig& cfg, const TrainRequest& req, std::ostream& out);

struct Shard {
  int index = 0;
  int count = 1;
};
Shard parse_shard(const std::string& text);
int cmd_benchmark(const ExperimentConfig& cfg, const Shard& shard, std::ostream& out);

int cmd_report(const ExperimentConfig& cfg, std::ostream& out);

int cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, const std::string& domain,
                 std::ostream& out);

/// Full command line: parsing, config precedence (defaults < file < env <
/// flags), dispatch and error-to-exit-code mapping.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cropdg::cli
