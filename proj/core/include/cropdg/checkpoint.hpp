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
#include <string>

#include "cropdg/network.hpp"

namespace cropdg {

struct CheckpointMeta {
  ModelConfig model;
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_iou = 0.0;
  std::string tag;  // e.g. the teacher's domain or the method name
};

/// Weight map plus metadata in one torch archive, written to a temporary
/// file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, SegmentationNet& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  SegmentationNet model{nullptr};
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cropdg
