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

#include "cropdg/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cropdg/checkpoint.hpp"
#include "cropdg/error.hpp"
#include "cropdg/serialization.hpp"

namespace cropdg {

namespace fs = std::filesystem;

std::string to_string(BenchmarkMode m) { return m == BenchmarkMode::leave_one_out ? "leave_one_out" : "fixed_sources"; }

BenchmarkMode parse_benchmark_mode(const std::string& s) {
  if (s == "leave_one_out") return BenchmarkMode::leave_one_out;
  if (s == "fixed_sources") return BenchmarkMode::fixed_sources;
  throw ConfigError("unknown benchmark mode '" + s + "' (expected leave_one_out|fixed_sources)");
}

void BenchmarkSpec::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("benchmark name must be a plain word");
  if (methods.empty()) throw ConfigError("benchmark needs at least one method");
  if (seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  std::set<std::string> method_names;
  for (const auto& m : methods) {
    m.validate();
    if (!method_names.insert(m.name).second) throw ConfigError("duplicate method name '" + m.name + "'");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("duplicate seeds in benchmark");
  }
  if (mode == BenchmarkMode::leave_one_out && domains.size() < 2) {
    throw ConfigError("leave-one-out needs at least 2 domains");
  }
  if (mode == BenchmarkMode::fixed_sources) {
    if (domains.empty()) throw ConfigError("fixed_sources needs at least one source domain");
    if (extra_targets.empty()) throw ConfigError("fixed_sources needs extra_targets");
    for (const auto& t : extra_targets) {
      if (std::find(domains.begin(), domains.end(), t) != domains.end()) {
        throw ConfigError("target '" + t + "' is also a source domain");
      }
    }
  }
  if (shard_count < 1 || shard_index < 0 || shard_index >= shard_count) throw ConfigError("invalid shard settings");
}

fs::path cell_path(const fs::path& results_root, const std::string& benchmark, const std::string& method,
                   const std::string& target, std::uint64_t seed) {
  return results_root / benchmark / method / target / (std::to_string(seed) + ".json");
}

void write_result(const fs::path& path, const BenchmarkResult& r) {
  Json j{{"method", r.method}, {"target", r.target_domain}, {"seed", r.seed}, {"status", r.failed ? "failed" : "ok"}};
  if (r.failed) {
    j["error"] = r.error;
  } else {
    j["iou"] = r.iou;
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

BenchmarkResult read_result(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read result " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed result record " + path.string() + ": " + e.what());
  }
  StrictObject o(j, path.string());
  BenchmarkResult r;
  std::string status;
  o.read("method", r.method);
  o.read("target", r.target_domain);
  o.read("seed", r.seed);
  o.read("status", status);
  o.read("iou", r.iou);
  o.read("error", r.error);
  o.finish();
  if (status != "ok" && status != "failed") throw IntegrityError("bad status in " + path.string());
  r.failed = status == "failed";
  return r;
}

std::vector<BenchmarkResult> load_results(const fs::path& results_root, const std::string& benchmark) {
  std::vector<BenchmarkResult> out;
  const auto dir = results_root / benchmark;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".json") continue;
    // Cell records sit exactly at <method>/<target>/<seed>.json.
    const auto rel = fs::relative(e.path(), dir);
    if (std::distance(rel.begin(), rel.end()) == 3) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(read_result(f));
  return out;
}

namespace {

// One training and the cells it fills.
struct CellGroup {
  const MethodConfig* method = nullptr;
  DGTask task;
  std::vector<DomainDataset> targets;
  std::uint64_t seed = 0;
};

std::vector<CellGroup> plan(const DatasetManifest& manifest, const BenchmarkSpec& spec) {
  std::vector<CellGroup> groups;
  if (spec.mode == BenchmarkMode::leave_one_out) {
    const auto tasks = leave_one_out_tasks(manifest, spec.domains);
    for (const auto& m : spec.methods) {
      for (const auto& task : tasks) {
        for (auto seed : spec.seeds) groups.push_back(CellGroup{&m, task, {task.target}, seed});
      }
    }
  } else {
    DGTask task;
    for (const auto& d : spec.domains) task.sources.push_back(manifest.dataset(d));
    std::vector<DomainDataset> targets;
    for (const auto& t : spec.extra_targets) targets.push_back(manifest.dataset(t));
    task.target = targets.front();
    for (const auto& m : spec.methods) {
      for (auto seed : spec.seeds) groups.push_back(CellGroup{&m, task, targets, seed});
    }
  }
  return groups;
}

void audit(const CellGroup& g) {
  const auto names = g.task.source_names();
  for (const auto& t : g.targets) {
    if (std::find(names.begin(), names.end(), t.name()) != names.end()) {
      throw IntegrityError("target domain '" + t.name() + "' leaks into the training sources");
    }
  }
}

}  // namespace

BenchmarkRun run_benchmark(const DatasetManifest& manifest, const BenchmarkSpec& spec, const CellTrainer& trainer,
                           const AugmentConfig& preprocessing, const IoUConfig& iou_cfg) {
  spec.validate();
  const auto groups = plan(manifest, spec);
  BenchmarkRun run;
  for (std::size_t ordinal = 0; ordinal < groups.size(); ++ordinal) {
    const auto& g = groups[ordinal];
    audit(g);
    std::vector<fs::path> paths;
    std::vector<BenchmarkResult> done;
    for (const auto& t : g.targets) {
      paths.push_back(cell_path(spec.results_root, spec.name, g.method->name, t.name(), g.seed));
      if (fs::exists(paths.back())) {
        auto r = read_result(paths.back());
        if (!r.failed) done.push_back(std::move(r));
      }
    }
    if (done.size() == g.targets.size()) {
      run.results.insert(run.results.end(), done.begin(), done.end());
      continue;
    }
    if (static_cast<int>(ordinal % static_cast<std::size_t>(spec.shard_count)) != spec.shard_index) {
      run.missing_cells += static_cast<int>(g.targets.size());
      continue;
    }

    ++run.trainings;
    std::vector<BenchmarkResult> cells;
    try {
      const auto predictor = trainer(*g.method, g.task, g.seed);
      for (const auto& t : g.targets) {
        cells.push_back(BenchmarkResult{g.method->name, t.name(), g.seed,
                                        evaluate_domain(predictor, t, preprocessing, iou_cfg), false, {}});
      }
    } catch (const std::exception& e) {
      cells.clear();
      for (const auto& t : g.targets) cells.push_back(BenchmarkResult{g.method->name, t.name(), g.seed, 0.0, true, e.what()});
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      write_result(paths[i], cells[i]);
      if (cells[i].failed) ++run.failed_cells;
      run.results.push_back(cells[i]);
    }
  }
  return run;
}

TeacherProvider cached_teacher_provider(const fs::path& cache_dir, int* trained_counter) {
  return [cache_dir, trained_counter](const DomainDataset& source, const TrainConfig& teacher_cfg) {
    auto keyed = teacher_cfg;
    keyed.log_path.clear();
    std::ostringstream key;
    key << std::hex << fnv1a(to_json(keyed).dump());
    const auto path = cache_dir / source.name() / ("seed-" + std::to_string(teacher_cfg.seed) + "-" + key.str() + ".pt");
    if (fs::exists(path)) return load_checkpoint(path).model;
    auto r = train_erm({source}, keyed);
    const int best = r.history.best_epoch;
    const double best_iou = best > 0 ? r.history.epochs[static_cast<std::size_t>(best - 1)].val_iou : 0.0;
    save_checkpoint(path, r.model, CheckpointMeta{keyed.model, keyed.seed, best, best_iou, source.name()});
    if (trained_counter != nullptr) ++*trained_counter;
    return r.model;
  };
}

CellTrainer default_cell_trainer(const TrainConfig& base, const fs::path& teacher_cache) {
  const auto provider = cached_teacher_provider(teacher_cache);
  return [base, provider](const MethodConfig& method, const DGTask& task, std::uint64_t seed) {
    auto cfg = base;
    cfg.seed = seed;
    cfg.val_fraction = task.val_fraction;
    auto r = train_baseline(method, task.sources, cfg, provider);
    return make_predictor(r.model);
  };
}

ReportTable aggregate(const std::vector<BenchmarkResult>& results, const std::vector<std::string>& target_order) {
  ReportTable table;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  std::set<std::string> methods, targets;
  for (const auto& r : results) {
    if (r.failed) {
      ++table.failed_results;
      continue;
    }
    values[{r.method, r.target_domain}].push_back(r.iou);
    methods.insert(r.method);
    targets.insert(r.target_domain);
  }
  if (values.empty()) throw ArgumentError("aggregate needs at least one successful result");
  table.methods.assign(methods.begin(), methods.end());
  for (const auto& t : target_order) {
    if (targets.contains(t)) table.targets.push_back(t);
  }
  for (const auto& t : targets) {
    if (std::find(table.targets.begin(), table.targets.end(), t) == table.targets.end()) table.targets.push_back(t);
  }

  for (auto& [key, v] : values) {
    std::sort(v.begin(), v.end());
    CellStats s;
    s.n = static_cast<int>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / s.n;
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(ss / (s.n - 1));
    } else {
      s.single_seed = true;
      table.warnings.push_back(key.first + " on " + key.second + ": single seed, std reported as 0");
    }
    table.cells.emplace(key, s);
  }
  for (const auto& m : table.methods) {
    double mean_sum = 0.0, std_sum = 0.0;
    int count = 0;
    for (const auto& t : table.targets) {
      auto it = table.cells.find({m, t});
      if (it == table.cells.end()) continue;
      mean_sum += it->second.mean;
      std_sum += it->second.stddev;
      ++count;
    }
    table.average[m] = {mean_sum / count, std_sum / count};
  }
  return table;
}

namespace {

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v * 100.0;
  return os.str();
}

}  // namespace

std::string format_csv(const ReportTable& table, char delimiter) {
  std::ostringstream os;
  os << "method";
  for (const auto& t : table.targets) os << delimiter << t << " mean" << delimiter << t << " std";
  os << delimiter << "Average mean" << delimiter << "Average std\n";
  for (const auto& m : table.methods) {
    os << m;
    for (const auto& t : table.targets) {
      auto it = table.cells.find({m, t});
      if (it == table.cells.end()) {
        os << delimiter << delimiter;
      } else {
        os << delimiter << pct(it->second.mean) << delimiter << pct(it->second.stddev);
      }
    }
    const auto& [am, as] = table.average.at(m);
    os << delimiter << pct(am) << delimiter << pct(as) << "\n";
  }
  return os.str();
}

std::string format_table(const ReportTable& table) {
  std::vector<std::string> columns = table.targets;
  columns.push_back("Average");
  auto mean_of = [&](const std::string& m, const std::string& col) -> std::optional<std::pair<double, double>> {
    if (col == "Average") return table.average.at(m);
    auto it = table.cells.find({m, col});
    if (it == table.cells.end()) return std::nullopt;
    return std::pair{it->second.mean, it->second.stddev};
  };

  std::ostringstream os;
  os << "| Method |";
  for (const auto& c : columns) os << " " << c << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& m : table.methods) {
    os << "| " << m << " |";
    for (const auto& c : columns) {
      const auto v = mean_of(m, c);
      if (!v) {
        os << " n/a |";
        continue;
      }
      // Rank by mean among the methods that have this column.
      int better = 0;
      for (const auto& other : table.methods) {
        const auto ov = mean_of(other, c);
        if (ov && ov->first > v->first) ++better;
      }
      std::string cell = pct(v->first) + " ± " + pct(v->second);
      if (table.methods.size() > 1 && better == 0) cell = "**" + cell + "**";
      if (table.methods.size() > 2 && better == 1) cell = "_" + cell + "_";
      os << " " << cell << " |";
    }
    os << "\n";
  }
  for (const auto& w : table.warnings) os << "\nwarning: " << w;
  if (table.failed_results > 0) os << "\nwarning: " << table.failed_results << " failed cell(s) excluded";
  if (!table.warnings.empty() || table.failed_results > 0) os << "\n";
  return os.str();
}

}  // namespace cropdg
