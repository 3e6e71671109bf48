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

#include "cropdg/cli/commands.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cropdg/checkpoint.hpp"
#include "cropdg/cli/report.hpp"
#include "cropdg/error.hpp"
#include "cropdg/image_io.hpp"

namespace cropdg::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) noexcept {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (err == nullptr) return kExitFailure;
  switch (err->kind()) {
    case ErrorKind::argument:
    case ErrorKind::config:
    case ErrorKind::lookup:
      return kExitConfig;
    case ErrorKind::shape:
    case ErrorKind::manifest:
    case ErrorKind::integrity:
      return kExitIntegrity;
    case ErrorKind::numeric:
    case ErrorKind::divergence:
      return kExitDivergence;
    case ErrorKind::io:
      return kExitFailure;
  }
  return kExitFailure;
}

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

constexpr const char* kToyMarker = ".cropdg-toy";

fs::path require_dataset_root(const ExperimentConfig& cfg) {
  if (cfg.dataset_root.empty()) {
    throw ConfigError(std::string("no dataset root: set dataset_root, ") + kDatasetRootEnv + " or --dataset-root");
  }
  return cfg.dataset_root;
}

std::vector<std::string> resolve_domains(const ExperimentConfig& cfg, const DatasetManifest& m) {
  if (!cfg.domains.empty()) {
    for (const auto& d : cfg.domains) {
      if (!m.contains(d)) throw LookupError("domain '" + d + "' is not in the dataset");
    }
    return cfg.domains;
  }
  std::vector<std::string> all;
  for (const auto& d : m.domains) {
    if (std::find(cfg.extra_targets.begin(), cfg.extra_targets.end(), d.name) == cfg.extra_targets.end()) {
      all.push_back(d.name);
    }
  }
  return all;
}

MethodConfig find_method(const ExperimentConfig& cfg, const std::string& name) {
  for (const auto& m : expanded_methods(cfg)) {
    if (m.name == name) return m;
  }
  return method_from_name(name);
}

void write_history(const fs::path& path, const TrainHistory& h) {
  Json epochs = Json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"ce_loss", e.ce_loss},
                      {"kd_loss", e.kd_loss},
                      {"val_iou", e.val_iou},
                      {"lr", e.lr}});
  }
  write_file_atomic(path, Json{{"best_epoch", h.best_epoch}, {"epochs", epochs}}.dump(2) + "\n");
}

Json result_json(const BenchmarkResult& r) {
  Json j{{"method", r.method}, {"target", r.target_domain}, {"seed", r.seed}, {"status", r.failed ? "failed" : "ok"}};
  if (r.failed) {
    j["error"] = r.error;
  } else {
    j["iou"] = r.iou;
  }
  return j;
}

void write_tables(const fs::path& dir, const ReportTable& table) {
  write_file_atomic(dir / "table.csv", format_csv(table));
  write_file_atomic(dir / "table.md", format_table(table));
}

}  // namespace

std::uint64_t tree_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "config.effective.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(fs::relative(f, dir).generic_string(), h);
    h = fnv1a(read_bytes(f), h);
  }
  return h;
}

int cmd_make_toy(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path root = require_dataset_root(cfg);
  const fs::path parent = root.has_parent_path() ? root.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create " + parent.string() + ": " + ec.message());
  if (fs::exists(root) && !fs::is_empty(root) && !fs::exists(root / kToyMarker)) {
    throw ConfigError("refusing to overwrite " + root.string() + ": not a generated toy dataset");
  }

  const fs::path staging = parent / (root.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging, ec);
  DatasetManifest manifest;
  std::uint64_t hash = 0;
  try {
    generate_toy_manifest(cfg.toy.domains, staging, cfg.toy.seed);
    write_file_atomic(staging / kToyMarker, "");
    hash = tree_hash(staging);
    write_effective_config(staging, cfg);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }

  const bool existed = fs::exists(root) && !fs::is_empty(root);
  if (existed && tree_hash(root) == hash) {
    fs::remove_all(staging, ec);
    manifest = load_manifest(root, ManifestCheck::paths);
    out << "unchanged " << root.string() << " (hash " << hex(hash) << ")\n";
  } else {
    const fs::path old = parent / (root.filename().string() + ".old-" + std::to_string(::getpid()));
    if (fs::exists(root)) fs::rename(root, old);
    fs::rename(staging, root);
    fs::remove_all(old, ec);
    manifest = load_manifest(root, ManifestCheck::paths);
    out << (existed ? "regenerated " : "generated ") << root.string() << " (hash " << hex(hash) << ")\n";
  }
  std::size_t pairs = 0;
  for (const auto& d : manifest.domains) {
    pairs += manifest.index.at(d.name).size();
    out << "  " << d.name << ": " << d.sample_count << " samples, " << to_string(d.category) << "\n";
  }
  out << manifest.domains.size() << " domains, " << pairs << " image/mask pairs\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const TrainRequest& req, std::ostream& out) {
  const auto manifest = load_manifest(require_dataset_root(cfg), ManifestCheck::decode);
  const auto method = find_method(cfg, req.method);
  method.validate();
  auto domains = resolve_domains(cfg, manifest);
  if (req.target) {
    if (!manifest.contains(*req.target)) throw LookupError("target '" + *req.target + "' is not in the dataset");
    domains.erase(std::remove(domains.begin(), domains.end(), *req.target), domains.end());
  }
  if (domains.empty()) throw ConfigError("no source domains left to train on");
  std::vector<DomainDataset> sources;
  for (const auto& d : domains) sources.push_back(manifest.dataset(d));

  auto tcfg = cfg.train;
  if (req.seed) tcfg.seed = *req.seed;
  tcfg.validate();

  const RunLayout layout{cfg.output_dir};
  const std::string tag = method.name + (req.target ? "-to-" + *req.target : "") + "-seed" + std::to_string(tcfg.seed);
  const auto ckpt = layout.checkpoints() / (tag + ".pt");
  fs::create_directories(layout.logs());
  write_effective_config(layout.root, cfg);
  write_effective_config(layout.checkpoints(), cfg);
  if (fs::exists(ckpt)) {
    const auto meta = read_checkpoint_meta(ckpt);
    out << "checkpoint " << ckpt.string() << " exists (epoch " << meta.epoch << ", val IoU " << meta.val_iou
        << "); skipping\n";
    return kExitOk;
  }

  tcfg.log_path = (layout.logs() / (tag + ".jsonl")).string();
  fs::remove(tcfg.log_path);
  int trained = 0;
  const auto provider = cached_teacher_provider(layout.teachers(), &trained);
  auto result = train_baseline(method, sources, tcfg, provider);
  if (method.uses_teachers()) {
    const int teachers = method.kind == MethodKind::ensemble_kd_erm_teachers ? 0 : static_cast<int>(sources.size());
    out << "teachers: " << trained << " trained, " << std::max(0, teachers - trained) << " from cache\n";
  }

  const auto& h = result.history;
  const double best_iou = h.best_epoch > 0 ? h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].val_iou : 0.0;
  save_checkpoint(ckpt, result.model,
                  CheckpointMeta{method_train_config(method, tcfg).model, tcfg.seed, h.best_epoch, best_iou, method.name});
  write_history(layout.logs() / (tag + ".history.json"), h);
  out << "trained " << method.name << " on";
  for (const auto& d : domains) out << " " << d;
  out << ": " << h.epochs.size() << " epochs, best epoch " << h.best_epoch << ", val IoU " << best_iou << "\n";
  out << "checkpoint " << ckpt.string() << "\n";
  return kExitOk;
}

Shard parse_shard(const std::string& text) {
  Shard s;
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    s.index = std::stoi(text.substr(0, slash), &used);
    if (used != slash) throw std::invalid_argument(text);
    s.count = std::stoi(text.substr(slash + 1), &used);
    if (used != text.size() - slash - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw ConfigError("shard must look like i/n, got '" + text + "'");
  }
  if (s.count < 1 || s.index < 0 || s.index >= s.count) throw ConfigError("shard index out of range: " + text);
  return s;
}

int cmd_benchmark(const ExperimentConfig& cfg, const Shard& shard, std::ostream& out) {
  const auto manifest = load_manifest(require_dataset_root(cfg), ManifestCheck::decode);
  const RunLayout layout{cfg.output_dir};
  BenchmarkSpec spec;
  spec.name = cfg.benchmark_name;
  spec.mode = cfg.mode;
  spec.domains = resolve_domains(cfg, manifest);
  spec.extra_targets = cfg.extra_targets;
  for (const auto& t : spec.extra_targets) {
    if (!manifest.contains(t)) throw LookupError("target '" + t + "' is not in the dataset");
  }
  spec.seeds = cfg.seeds;
  spec.methods = expanded_methods(cfg);
  spec.results_root = layout.results();
  spec.shard_index = shard.index;
  spec.shard_count = shard.count;
  spec.validate();

  const auto dir = layout.results() / spec.name;
  fs::create_directories(dir);
  write_effective_config(layout.root, cfg);
  write_effective_config(dir, cfg);

  const auto run = run_benchmark(manifest, spec, default_cell_trainer(cfg.train, layout.teachers()), cfg.train.augment,
                                 cfg.train.iou);
  const auto targets = spec.mode == BenchmarkMode::leave_one_out ? spec.domains : spec.extra_targets;

  Json cells = Json::array();
  for (const auto& r : run.results) cells.push_back(result_json(r));
  Json summary{{"trainings", run.trainings},
               {"failed_cells", run.failed_cells},
               {"missing_cells", run.missing_cells},
               {"complete", run.complete()}};
  const bool any_ok = std::any_of(run.results.begin(), run.results.end(), [](const auto& r) { return !r.failed; });
  if (any_ok) {
    const auto table = aggregate(run.results, targets);
    write_tables(dir, table);
    Json stats = Json::array();
    for (const auto& [key, s] : table.cells) {
      stats.push_back({{"method", key.first}, {"target", key.second}, {"mean", s.mean}, {"std", s.stddev}, {"n", s.n}});
    }
    summary["stats"] = stats;
    out << format_table(table);
  }
  write_file_atomic(dir / "results.json", Json{{"benchmark", spec.name}, {"summary", summary}, {"cells", cells}}.dump(2) + "\n");

  out << run.results.size() << " cells, " << run.trainings << " trainings, " << run.failed_cells << " failed, "
      << run.missing_cells << " not in this shard\n";
  if (run.failed_cells > 0 || run.missing_cells > 0) {
    out << "partial grid: rerun the failed cells or the remaining shards to complete it\n";
    return kExitPartial;
  }
  return kExitOk;
}

int cmd_report(const ExperimentConfig& cfg, std::ostream& out) {
  const RunLayout layout{cfg.output_dir};
  fs::create_directories(layout.figures());
  write_effective_config(layout.figures(), cfg);

  const auto results = load_results(layout.results(), cfg.benchmark_name);
  if (!results.empty()) {
    const auto table = aggregate(results, cfg.mode == BenchmarkMode::leave_one_out ? cfg.domains : cfg.extra_targets);
    write_tables(layout.results() / cfg.benchmark_name, table);
    out << format_table(table);
  }

  const auto points = sweep_points(cfg, results);
  if (!points.empty()) {
    auto lambdas = cfg.sweep.kd_weights;
    auto taus = cfg.sweep.temperatures;
    if (lambdas.empty()) lambdas.push_back(cfg.train.loss.kd_weight);
    if (taus.empty()) taus.push_back(cfg.train.loss.temperature);
    write_file_atomic(layout.figures() / "sweep_lambda.svg", sweep_plot(points, SweepAxis::kd_weight, lambdas, taus).svg);
    write_file_atomic(layout.figures() / "sweep_tau.svg", sweep_plot(points, SweepAxis::temperature, taus, lambdas).svg);
    out << "sweep plots: " << points.size() << " points\n";
  }

  if (cfg.report.checkpoints.empty()) return kExitOk;
  std::vector<std::pair<std::string, SegmentationNet>> models;
  for (const auto& [label, path] : cfg.report.checkpoints) {
    fs::path p = path;
    if (p.is_relative() && !fs::exists(p)) p = layout.root / p;
    if (!fs::exists(p)) {
      out << "missing checkpoint: " << label << " (" << path << "), skipped\n";
      continue;
    }
    models.emplace_back(label, load_checkpoint(p).model);
  }
  if (models.empty()) return kExitOk;

  const auto manifest = load_manifest(require_dataset_root(cfg), ManifestCheck::paths);
  std::string domain = cfg.report.domain;
  if (domain.empty()) domain = !cfg.extra_targets.empty() ? cfg.extra_targets.front() : resolve_domains(cfg, manifest).front();
  auto dataset = manifest.dataset(domain);
  dataset.samples.resize(std::min<std::size_t>(dataset.samples.size(), static_cast<std::size_t>(cfg.report.samples)));
  const auto samples = load_samples(dataset);
  out << "panels (input";
  for (const auto& [label, model] : models) out << " | " << label;
  out << ")\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto prepared = preprocess_eval(samples[i], cfg.train.augment);
    std::vector<torch::Tensor> probs;
    for (auto& [label, model] : models) probs.push_back(probability_map(model, prepared.image));
    const auto panel = render_panel(denormalize(prepared.image, cfg.train.augment), probs);
    const auto path = layout.figures() / ("panel_" + domain + "_" + dataset.samples[i].image.stem().string() + ".png");
    write_rgb(path, panel);
    out << "  " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::string& domain, std::ostream& out) {
  const auto manifest = load_manifest(require_dataset_root(cfg), ManifestCheck::decode);
  if (!manifest.contains(domain)) throw LookupError("domain '" + domain + "' is not in the dataset");
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  auto loaded = load_checkpoint(checkpoint);
  if (loaded.meta.model.input_width != cfg.train.augment.output_width ||
      loaded.meta.model.input_height != cfg.train.augment.output_height) {
    throw ConfigError("checkpoint input size does not match train.augment output size");
  }
  const double value = evaluate_domain(make_predictor(loaded.model), manifest.dataset(domain), cfg.train.augment,
                                       cfg.train.iou);
  out << Json{{"checkpoint", checkpoint.string()}, {"domain", domain}, {"iou", value}}.dump() << "\n";
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain crop segmentation with ensemble distillation", "cropdg"};
  app.require_subcommand(1);
  std::string config_path, dataset_root, output_dir;
  app.add_option("-c,--config", config_path, "experiment config (JSON)");
  app.add_option("--dataset-root", dataset_root, std::string("dataset root; overrides ") + kDatasetRootEnv);
  app.add_option("-o,--output", output_dir, "run directory");

  auto* make_toy = app.add_subcommand("make-toy", "generate the procedural toy dataset");
  std::optional<std::uint64_t> toy_seed;
  make_toy->add_option("--seed", toy_seed, "generator seed");

  auto* train = app.add_subcommand("train", "train one method on the configured sources");
  TrainRequest req;
  train->add_option("-m,--method", req.method, "method name")->required();
  train->add_option("-t,--target", req.target, "held-out domain excluded from the sources");
  train->add_option("-s,--seed", req.seed, "training seed");

  auto* bench = app.add_subcommand("benchmark", "run the benchmark grid and emit tables");
  std::string shard_text = "0/1";
  std::vector<std::uint64_t> seeds;
  bench->add_option("--shard", shard_text, "run only shard i of n (i/n)");
  bench->add_option("--seeds", seeds, "override the seed list")->delimiter(',');

  auto* report = app.add_subcommand("report", "emit tables, sweep plots and qualitative panels");

  auto* evaluate = app.add_subcommand("evaluate", "IoU of a checkpoint on one domain");
  std::string checkpoint, domain;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("-d,--domain", domain, "domain to evaluate on")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_experiment(config_path);
    if (const char* env = std::getenv(kDatasetRootEnv); env != nullptr && *env != '\0') cfg.dataset_root = env;
    if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (toy_seed) cfg.toy.seed = *toy_seed;
    if (!seeds.empty()) cfg.seeds = seeds;
    cfg.validate();

    if (*make_toy) return cmd_make_toy(cfg, out);
    if (*train) return cmd_train(cfg, req, out);
    if (*bench) return cmd_benchmark(cfg, parse_shard(shard_text), out);
    if (*report) return cmd_report(cfg, out);
    if (*evaluate) return cmd_evaluate(cfg, checkpoint, domain, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const auto* typed = dynamic_cast<const Error*>(&e);
    err << "error" << (typed ? std::string(" (") + to_string(typed->kind()) + ")" : std::string()) << ": " << e.what()
        << "\n";
    return code;
  }
  return kExitFailure;
}

}  // namespace cropdg::cli
