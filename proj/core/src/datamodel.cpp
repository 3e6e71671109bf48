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

#include "cropdg/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cropdg/error.hpp"
#include "cropdg/image_io.hpp"
#include "cropdg/seeding.hpp"

namespace cropdg {

namespace fs = std::filesystem;

std::string to_string(SourceType t) { return t == SourceType::synthetic ? "synthetic" : "real"; }

std::string to_string(Category c) {
  switch (c) {
    case Category::low: return "low";
    case Category::medium: return "medium";
    case Category::tall: return "tall";
    case Category::any: return "any";
  }
  return "any";
}

SourceType parse_source_type(const std::string& s) {
  if (s == "synthetic") return SourceType::synthetic;
  if (s == "real") return SourceType::real;
  throw ArgumentError("unknown source type '" + s + "' (expected synthetic|real)");
}

Category parse_category(const std::string& s) {
  if (s == "low") return Category::low;
  if (s == "medium") return Category::medium;
  if (s == "tall") return Category::tall;
  if (s == "any") return Category::any;
  throw ArgumentError("unknown category '" + s + "' (expected low|medium|tall|any)");
}

void validate_sample(const Sample& s) {
  if (s.image.dim() != 3 || s.image.size(0) != 3) throw ShapeError("sample image must be [3, H, W]");
  if (s.mask.dim() != 2) throw ShapeError("sample mask must be [H, W]");
  if (s.image.size(1) != s.mask.size(0) || s.image.size(2) != s.mask.size(1)) {
    throw ShapeError("sample image and mask differ in spatial size");
  }
  if (s.mask.ne(0).logical_and(s.mask.ne(1)).any().item<bool>()) {
    throw ArgumentError("sample mask is not binary");
  }
}

const DomainDescriptor& DatasetManifest::descriptor(const std::string& name) const {
  auto it = std::find_if(domains.begin(), domains.end(), [&](const auto& d) { return d.name == name; });
  if (it == domains.end()) throw LookupError("unknown domain '" + name + "'");
  return *it;
}

DomainDataset DatasetManifest::dataset(const std::string& name) const {
  DomainDataset ds{descriptor(name), {}};
  ds.samples = index.at(name);
  return ds;
}

bool DatasetManifest::contains(const std::string& name) const {
  return std::any_of(domains.begin(), domains.end(), [&](const auto& d) { return d.name == name; });
}

std::vector<std::string> DGTask::source_names() const {
  std::vector<std::string> names;
  for (const auto& s : sources) names.push_back(s.name());
  return names;
}

std::string format_meta(const DomainDescriptor& d) {
  std::ostringstream os;
  os.precision(17);
  os << "name=" << d.name << "\n"
     << "samples=" << d.sample_count << "\n"
     << "type=" << to_string(d.source_type) << "\n"
     << "category=" << to_string(d.category) << "\n"
     << "height_m=";
  if (d.height_m) {
    os << *d.height_m;
  } else {
    os << "any";
  }
  os << "\n";
  return os.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, fs::path> pngs_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.emplace(e.path().stem().string(), e.path());
  }
  return out;
}

std::map<std::string, std::string> read_variants(const fs::path& file) {
  std::map<std::string, std::string> out;
  if (!fs::exists(file)) return out;
  std::istringstream in(read_file(file));
  std::string stem, variant;
  while (in >> stem >> variant) out[stem] = variant;
  return out;
}

}  // namespace

DomainDescriptor parse_meta(const std::string& text, const fs::path& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ManifestError("malformed meta line '" + line + "' in " + origin.string());
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  static const std::set<std::string> known{"name", "samples", "type", "category", "height_m"};
  for (const auto& [k, v] : kv) {
    if (!known.contains(k)) throw ManifestError("unknown meta key '" + k + "' in " + origin.string());
  }
  for (const char* required : {"name", "samples", "type", "category"}) {
    if (!kv.contains(required)) throw ManifestError(std::string("meta key '") + required + "' missing in " + origin.string());
  }
  DomainDescriptor d;
  try {
    d.name = kv["name"];
    std::size_t pos = 0;
    d.sample_count = std::stoll(kv["samples"], &pos);
    if (pos != kv["samples"].size() || d.sample_count < 0) throw ArgumentError("bad sample count");
    d.source_type = parse_source_type(kv["type"]);
    d.category = parse_category(kv["category"]);
    if (kv.contains("height_m") && kv["height_m"] != "any" && !kv["height_m"].empty()) {
      d.height_m = std::stod(kv["height_m"]);
    }
  } catch (const std::exception& e) {
    throw ManifestError("invalid meta in " + origin.string() + ": " + e.what());
  }
  if (d.name.empty()) throw ManifestError("empty domain name in " + origin.string());
  return d;
}

DatasetManifest load_manifest(const fs::path& root, ManifestCheck check) {
  if (!fs::is_directory(root)) throw ManifestError("dataset root is not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (dirs.empty()) throw IntegrityError("dataset root " + root.string() + " contains no domains");

  DatasetManifest m;
  m.root = root;
  for (const auto& dir : dirs) {
    const auto meta_path = dir / "meta";
    if (!fs::is_regular_file(meta_path)) throw ManifestError("missing meta file " + meta_path.string());
    auto desc = parse_meta(read_file(meta_path), meta_path);
    if (m.index.contains(desc.name)) throw ManifestError("duplicate domain name '" + desc.name + "'");

    const auto images = pngs_by_stem(dir / "images");
    const auto masks = pngs_by_stem(dir / "masks");
    for (const auto& [stem, path] : images) {
      if (!masks.contains(stem)) throw IntegrityError("image without mask: " + path.string());
    }
    for (const auto& [stem, path] : masks) {
      if (!images.contains(stem)) throw IntegrityError("mask without image: " + path.string());
    }
    if (static_cast<std::int64_t>(images.size()) != desc.sample_count) {
      throw IntegrityError("domain '" + desc.name + "' declares " + std::to_string(desc.sample_count) +
                           " samples but " + dir.string() + " holds " + std::to_string(images.size()));
    }
    const auto variants = read_variants(dir / "variants");
    std::vector<SampleRef> refs;
    refs.reserve(images.size());
    for (const auto& [stem, path] : images) {
      SampleRef ref{path, masks.at(stem), {}};
      if (auto v = variants.find(stem); v != variants.end()) ref.variant = v->second;
      if (check == ManifestCheck::decode) {
        Sample s{read_rgb(ref.image), read_mask(ref.mask), desc.name};
        if (s.image.size(1) != s.mask.size(0) || s.image.size(2) != s.mask.size(1)) {
          throw IntegrityError("image and mask sizes differ: " + ref.image.string());
        }
      }
      refs.push_back(std::move(ref));
    }
    m.index.emplace(desc.name, std::move(refs));
    m.domains.push_back(std::move(desc));
  }
  return m;
}

std::string export_manifest(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["root"] = m.root.string();
  j["domains"] = nlohmann::ordered_json::array();
  for (const auto& d : m.domains) {
    nlohmann::ordered_json dj;
    dj["name"] = d.name;
    dj["samples"] = d.sample_count;
    dj["type"] = to_string(d.source_type);
    dj["category"] = to_string(d.category);
    dj["height_m"] = d.height_m ? nlohmann::ordered_json(*d.height_m) : nlohmann::ordered_json("any");
    auto& idx = dj["index"] = nlohmann::ordered_json::array();
    for (const auto& r : m.index.at(d.name)) {
      nlohmann::ordered_json rj{{"image", fs::relative(r.image, m.root).string()},
                                {"mask", fs::relative(r.mask, m.root).string()}};
      if (!r.variant.empty()) rj["variant"] = r.variant;
      idx.push_back(std::move(rj));
    }
    j["domains"].push_back(std::move(dj));
  }
  return j.dump(2);
}

std::pair<DomainDataset, DomainDataset> split_train_val(const DomainDataset& dataset, double val_fraction,
                                                        std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("val_fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  const auto n = dataset.size();
  if (n == 0) throw ArgumentError("cannot split empty dataset '" + dataset.name() + "'");
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val == n) {
    throw ArgumentError("split of " + std::to_string(n) + " samples at fraction " + std::to_string(val_fraction) +
                        " leaves an empty partition");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[perm[i]] = true;

  DomainDataset train{dataset.descriptor, {}};
  DomainDataset val{dataset.descriptor, {}};
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? val : train).samples.push_back(dataset.samples[i]);
  train.descriptor.sample_count = static_cast<std::int64_t>(train.size());
  val.descriptor.sample_count = static_cast<std::int64_t>(val.size());
  return {std::move(train), std::move(val)};
}

SourceSplits split_sources(const std::vector<DomainDataset>& sources, double val_fraction, std::uint64_t seed) {
  SourceSplits out;
  for (const auto& s : sources) {
    auto [train, val] = split_train_val(s, val_fraction, derive_seed(seed, "split/" + s.name()));
    out.train.push_back(std::move(train));
    out.val.push_back(std::move(val));
  }
  return out;
}

std::vector<DGTask> leave_one_out_tasks(const DatasetManifest& manifest, const std::vector<std::string>& domain_names,
                                        double val_fraction) {
  if (domain_names.size() < 2) throw ArgumentError("leave-one-out needs at least 2 domains");
  std::set<std::string> seen;
  for (const auto& n : domain_names) {
    if (!seen.insert(n).second) throw ArgumentError("duplicate domain '" + n + "' in leave-one-out list");
    if (!manifest.contains(n)) throw LookupError("unknown domain '" + n + "'");
  }
  std::vector<DGTask> tasks;
  for (const auto& target : domain_names) {
    DGTask t;
    t.target = manifest.dataset(target);
    t.val_fraction = val_fraction;
    for (const auto& n : domain_names) {
      if (n != target) t.sources.push_back(manifest.dataset(n));
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<Sample> load_samples(const DomainDataset& dataset) {
  std::vector<Sample> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.samples) out.push_back(Sample{read_rgb(r.image), read_mask(r.mask), dataset.name()});
  return out;
}

}  // namespace cropdg
