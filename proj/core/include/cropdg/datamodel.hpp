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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace cropdg {

enum class SourceType { synthetic, real };
enum class Category { low, medium, tall, any };

std::string to_string(SourceType t);
std::string to_string(Category c);
SourceType parse_source_type(const std::string& s);
Category parse_category(const std::string& s);

/// One row of the domain table: a named crop domain and its metadata.
struct DomainDescriptor {
  std::string name;
  std::int64_t sample_count = 0;
  SourceType source_type = SourceType::synthetic;
  Category category = Category::any;
  std::optional<double> height_m;

  friend bool operator==(const DomainDescriptor&, const DomainDescriptor&) = default;
};

/// An indexed (image, mask) file pair. `variant` carries the optional
/// terrain/sky sub-dataset tag of the sample.
struct SampleRef {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::string variant;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

/// A decoded sample: image [3, H, W] in [0, 1], mask [H, W] in {0, 1}.
struct Sample {
  torch::Tensor image;
  torch::Tensor mask;
  std::string domain;
};

/// Checks the Sample invariants (3 channels, matching spatial dims, binary mask).
void validate_sample(const Sample& s);

/// A named list of sample references. Splits and tasks share this type.
struct DomainDataset {
  DomainDescriptor descriptor;
  std::vector<SampleRef> samples;

  const std::string& name() const { return descriptor.name; }
  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<DomainDescriptor> domains;  // lexicographic by directory name
  std::map<std::string, std::vector<SampleRef>> index;

  const DomainDescriptor& descriptor(const std::string& name) const;
  DomainDataset dataset(const std::string& name) const;
  bool contains(const std::string& name) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// A domain-generalization task: train on `sources`, test on `target`.
struct DGTask {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  double val_fraction = 0.1;

  std::vector<std::string> source_names() const;
};

enum class ManifestCheck {
  paths,   // pairing and counts only
  decode,  // additionally decode every pair and check the sample invariants
};

/// Loads `root/<domain>/{images,masks,meta}`. Throws ManifestError for a
/// missing or malformed meta file and IntegrityError for pairing, count or
/// decoding problems (the message names the offending file).
DatasetManifest load_manifest(const std::filesystem::path& root, ManifestCheck check = ManifestCheck::decode);

/// Flat key=value metadata file format.
std::string format_meta(const DomainDescriptor& d);
DomainDescriptor parse_meta(const std::string& text, const std::filesystem::path& origin);

/// Structured-text (JSON) export of the whole manifest, for provenance.
std::string export_manifest(const DatasetManifest& m);

/// Uniform random split; val size = round(val_fraction * n). Both parts keep
/// the input order. Throws ArgumentError on a bad fraction or empty part.
std::pair<DomainDataset, DomainDataset> split_train_val(const DomainDataset& dataset, double val_fraction,
                                                        std::uint64_t seed);

struct SourceSplits {
  std::vector<DomainDataset> train;
  std::vector<DomainDataset> val;
};

/// Per-domain split of every source (each domain draws its own stream from
/// `seed`), so the validation share is uniform across domains.
SourceSplits split_sources(const std::vector<DomainDataset>& sources, double val_fraction, std::uint64_t seed);

/// One task per listed name, holding that name out as the target.
std::vector<DGTask> leave_one_out_tasks(const DatasetManifest& manifest, const std::vector<std::string>& domain_names,
                                        double val_fraction = 0.1);

/// Decodes every sample of a dataset (tagging each with the domain name).
std::vector<Sample> load_samples(const DomainDataset& dataset);

}  // namespace cropdg
