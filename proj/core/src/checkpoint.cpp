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

#include "cropdg/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <system_error>
#include <unistd.h>

#include "cropdg/error.hpp"
#include "cropdg/serialization.hpp"

namespace cropdg {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

namespace {

Json meta_to_json(const CheckpointMeta& m) {
  return Json{{"model", to_json(m.model)}, {"seed", m.seed}, {"epoch", m.epoch}, {"val_iou", m.val_iou}, {"tag", m.tag}};
}

CheckpointMeta meta_from_json(const Json& j) {
  StrictObject o(j, "checkpoint");
  CheckpointMeta m;
  m.model = model_config_from_json(o.at("model"), ModelConfig{}, "checkpoint.model");
  o.read("seed", m.seed);
  o.read("epoch", m.epoch);
  o.read("val_iou", m.val_iou);
  o.read("tag", m.tag);
  o.finish();
  return m;
}

c10::impl::GenericDict read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    auto value = torch::pickle_load(bytes);
    if (!value.isGenericDict()) throw IntegrityError("checkpoint " + path.string() + " is not a dictionary");
    return value.toGenericDict();
  } catch (const c10::Error& e) {
    throw IntegrityError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

CheckpointMeta meta_of(const c10::impl::GenericDict& dict, const fs::path& path) {
  auto it = dict.find(std::string("meta"));
  if (it == dict.end()) throw IntegrityError("checkpoint " + path.string() + " has no metadata");
  try {
    return meta_from_json(Json::parse(it->value().toStringRef()));
  } catch (const Json::exception& e) {
    throw IntegrityError("checkpoint " + path.string() + " has malformed metadata: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, SegmentationNet& model, const CheckpointMeta& meta) {
  c10::Dict<std::string, at::Tensor> weights;
  for (const auto& [name, t] : weight_map(*model)) weights.insert(name, t.detach().clone());
  c10::impl::GenericDict root(c10::StringType::get(), c10::AnyType::get());
  root.insert(std::string("meta"), meta_to_json(meta).dump());
  root.insert(std::string("weights"), weights);
  const auto bytes = torch::pickle_save(root);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) { return meta_of(read_archive(path), path); }

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const auto dict = read_archive(path);
  LoadedCheckpoint out{nullptr, meta_of(dict, path)};
  out.model = SegmentationNet(out.meta.model, out.meta.seed);
  auto it = dict.find(std::string("weights"));
  if (it == dict.end()) throw IntegrityError("checkpoint " + path.string() + " has no weights");
  const auto weights = it->value().toGenericDict();
  torch::NoGradGuard guard;
  for (auto& [name, tensor] : weight_map(*out.model)) {
    auto w = weights.find(name);
    if (w == weights.end()) throw IntegrityError("checkpoint " + path.string() + " lacks '" + name + "'");
    const auto loaded = w->value().toTensor();
    if (loaded.sizes() != tensor.sizes()) throw IntegrityError("checkpoint tensor '" + name + "' has the wrong shape");
    tensor.copy_(loaded);
  }
  out.model->eval();
  return out;
}

}  // namespace cropdg
