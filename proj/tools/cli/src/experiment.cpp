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

#include "cropdg/cli/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cropdg/checkpoint.hpp"
#include "cropdg/error.hpp"

namespace cropdg::cli {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  train.validate();
  if (std::set<std::string>(domains.begin(), domains.end()).size() != domains.size()) {
    throw ConfigError("duplicate entries in domains");
  }
  for (const auto& s : sweep.kd_weights) {
    if (!(s >= 0.0)) throw ConfigError("sweep.kd_weights must be >= 0");
  }
  for (const auto& t : sweep.temperatures) {
    if (!(t > 0.0)) throw ConfigError("sweep.temperatures must be > 0");
  }
  if (!sweep.empty()) method_from_name(sweep.base_method);
  if (report.samples < 1) throw ConfigError("report.samples must be >= 1");
  std::set<std::string> toy_names;
  for (const auto& d : toy.domains) {
    d.validate();
    if (!toy_names.insert(d.name).second) throw ConfigError("duplicate toy domain '" + d.name + "'");
  }
  if (domains.empty()) {
    for (const auto& m : expanded_methods(*this)) m.validate();
    return;
  }
  BenchmarkSpec spec;
  spec.name = benchmark_name;
  spec.mode = mode;
  spec.domains = domains;
  spec.extra_targets = extra_targets;
  spec.seeds = seeds;
  spec.methods = expanded_methods(*this);
  spec.validate();
}

std::string sweep_method_name(const SweepConfig& s, double kd_weight, double temperature) {
  std::ostringstream os;
  os << s.base_method << "_lambda" << kd_weight << "_tau" << temperature;
  return os.str();
}

std::vector<MethodConfig> expanded_methods(const ExperimentConfig& c) {
  auto out = c.methods;
  if (c.sweep.empty()) return out;
  const auto base = method_from_name(c.sweep.base_method);
  auto lambdas = c.sweep.kd_weights;
  auto taus = c.sweep.temperatures;
  if (lambdas.empty()) lambdas.push_back(c.train.loss.kd_weight);
  if (taus.empty()) taus.push_back(c.train.loss.temperature);
  for (double l : lambdas) {
    for (double t : taus) {
      auto m = base;
      m.name = sweep_method_name(c.sweep, l, t);
      LossConfig loss = c.train.loss;
      loss.kd_weight = l;
      loss.temperature = t;
      m.loss = loss;
      out.push_back(m);
    }
  }
  return out;
}

Json to_json(const ExperimentConfig& c) {
  Json methods = Json::array();
  for (const auto& m : c.methods) methods.push_back(to_json(m));
  Json toy_domains = Json::array();
  for (const auto& d : c.toy.domains) toy_domains.push_back(to_json(d));
  Json checkpoints = Json::object();
  for (const auto& [label, path] : c.report.checkpoints) checkpoints[label] = path;
  return Json{
      {"dataset_root", c.dataset_root},
      {"output_dir", c.output_dir},
      {"domains", c.domains},
      {"extra_targets", c.extra_targets},
      {"methods", methods},
      {"seeds", c.seeds},
      {"benchmark", {{"name", c.benchmark_name}, {"mode", to_string(c.mode)}}},
      {"train", to_json(c.train)},
      {"sweep",
       {{"kd_weights", c.sweep.kd_weights}, {"temperatures", c.sweep.temperatures}, {"base_method", c.sweep.base_method}}},
      {"toy", {{"seed", c.toy.seed}, {"domains", toy_domains}}},
      {"report", {{"domain", c.report.domain}, {"samples", c.report.samples}, {"checkpoints", checkpoints}}},
  };
}

ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig c;
  StrictObject o(j, "config");
  o.read("dataset_root", c.dataset_root);
  o.read("output_dir", c.output_dir);
  o.read("domains", c.domains);
  o.read("extra_targets", c.extra_targets);
  if (o.has("methods")) {
    const auto& ms = o.at("methods");
    if (!ms.is_array()) o.fail("methods", "expected an array");
    c.methods.clear();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      c.methods.push_back(method_config_from_json(ms[i], "config.methods[" + std::to_string(i) + "]"));
    }
  }
  o.read("seeds", c.seeds);
  if (o.has("benchmark")) {
    StrictObject b(o.at("benchmark"), "config.benchmark");
    b.read("name", c.benchmark_name);
    if (b.has("mode")) {
      std::string mode;
      b.read("mode", mode);
      c.mode = parse_benchmark_mode(mode);
    }
    b.finish();
  }
  if (o.has("train")) c.train = train_config_from_json(o.at("train"), c.train, "config.train");
  if (o.has("sweep")) {
    StrictObject s(o.at("sweep"), "config.sweep");
    s.read("kd_weights", c.sweep.kd_weights);
    s.read("temperatures", c.sweep.temperatures);
    s.read("base_method", c.sweep.base_method);
    s.finish();
  }
  if (o.has("toy")) {
    StrictObject t(o.at("toy"), "config.toy");
    t.read("seed", c.toy.seed);
    if (t.has("domains")) {
      const auto& ds = t.at("domains");
      if (!ds.is_array()) t.fail("domains", "expected an array");
      c.toy.domains.clear();
      for (std::size_t i = 0; i < ds.size(); ++i) {
        c.toy.domains.push_back(toy_spec_from_json(ds[i], "config.toy.domains[" + std::to_string(i) + "]"));
      }
    }
    t.finish();
  }
  if (o.has("report")) {
    StrictObject r(o.at("report"), "config.report");
    r.read("domain", c.report.domain);
    r.read("samples", c.report.samples);
    if (r.has("checkpoints")) {
      const auto& cps = r.at("checkpoints");
      if (!cps.is_object()) r.fail("checkpoints", "expected an object of label -> path");
      for (const auto& [label, path] : cps.items()) {
        if (!path.is_string()) r.fail("checkpoints", "paths must be strings");
        c.report.checkpoints.emplace_back(label, path.get<std::string>());
      }
    }
    r.finish();
  }
  o.finish();
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

void write_effective_config(const fs::path& dir, const ExperimentConfig& c) {
  write_file_atomic(dir / "config.effective.json", to_json(c).dump(2) + "\n");
}

}  // namespace cropdg::cli
