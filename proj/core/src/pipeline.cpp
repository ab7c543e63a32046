/*
 * Copyright 2026 The aspectfsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "aspectfsl/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <iostream>
#include <fstream>
#include <map>
#include <set>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/sprites.hpp"
#include "aspectfsl/training.hpp"

namespace aspectfsl {

namespace fs = std::filesystem;
using nlohmann::json;

shapes::ComboSelection selection_from_json(const PropertySchema& schema, const json& j) {
  const std::string mode = j.value("mode", "all");
  if (mode == "all") return shapes::ComboSelection::all();
  if (mode == "sampled") return shapes::ComboSelection::sampled(j.at("k").get<std::size_t>(), j.value("seed", 0ULL));
  if (mode == "explicit") {
    std::vector<PropertyVector> combos;
    for (const auto& c : j.at("combos")) {
      PropertyVector v{schema.name(), c.get<std::map<std::string, std::string>>()};
      validate_vector(schema, v);
      combos.push_back(std::move(v));
    }
    return shapes::ComboSelection::explicit_list(std::move(combos));
  }
  throw SchemaError("unknown selection mode '" + mode + "' (all, sampled, explicit)");
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"gen-data", "split", "episodes", "train", "eval", "report"};
  return stages;
}

json hash_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = hash_file(e.path());
  return files;
}

namespace {

struct Resolved {
  json config;
  std::uint64_t seed = 0;
  fs::path base;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::uint64_t stage_seed(const Resolved& r, const json& section) {
  return section.value("seed", r.seed);
}

Resolved prepare(const json& config, const PipelineOptions& options) {
  if (!config.is_object()) throw SchemaError("pipeline config must be a JSON object");
  Resolved r{config, config.value("seed", 0ULL), options.base_dir};
  if (options.seed) {
    // --seed replaces the seed of every stage.
    r.seed = *options.seed;
    r.config["seed"] = r.seed;
    for (const char* key : {"split", "episodes", "train"})
      if (r.config.contains(key) && r.config[key].contains("seed")) r.config[key]["seed"] = r.seed;
    auto& ds = r.config["dataset"];
    if (ds.contains("selection") && ds["selection"].contains("seed")) ds["selection"]["seed"] = r.seed;
    if (r.config.contains("models"))
      for (auto& m : r.config["models"])
        if (m.contains("train")) m["train"]["seed"] = r.seed;
  }
  return r;
}

std::vector<json> model_entries(const json& config) {
  std::vector<json> out;
  if (config.contains("models")) {
    for (const auto& m : config["models"]) out.push_back(m);
  } else {
    out.push_back({{"name", config.value("model_name", "model")},
                   {"model", config.value("model", json::object())},
                   {"train", config.value("train", json::object())}});
  }
  if (out.empty()) throw SchemaError("pipeline config lists no models");
  return out;
}

void check_config(const Resolved& r) {
  const json& c = r.config;
  if (!c.contains("dataset")) throw SchemaError("pipeline config needs a 'dataset' section");
  const json& ds = c["dataset"];
  if (ds.contains("manifest")) {
    const fs::path p = resolve(r.base, ds["manifest"].get<std::string>());
    if (!fs::exists(p)) throw IoError("dataset manifest not found: " + p.string());
  } else if (ds.contains("sprites")) {
    const fs::path frames = resolve(r.base, ds["sprites"].at("frames_dir").get<std::string>());
    const fs::path meta = resolve(r.base, ds["sprites"].at("metadata").get<std::string>());
    if (!fs::is_directory(frames)) throw IoError("sprite frames directory not found: " + frames.string());
    if (!fs::exists(meta)) throw IoError("sprite metadata not found: " + meta.string());
  } else {
    const std::string gen = ds.value("generator", "shapes");
    if (gen != "shapes") throw SchemaError("unknown dataset generator '" + gen + "'");
    if (ds.contains("schema")) ds["schema"].get<PropertySchema>();
  }
  if (c.contains("split")) parse_split_mode(c["split"].value("mode", "unique"));
  if (c.contains("episodes")) episode_config_from_json(c["episodes"]);
  std::set<std::string> names;
  for (const auto& m : model_entries(c)) {
    const std::string name = m.value("name", "model");
    if (!names.insert(name).second) throw SchemaError("duplicate model name '" + name + "'");
    model_config_from_json(m.value("model", json::object()));
    train_config_from_json(m.value("train", json::object()));
  }
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

json output_hashes(const fs::path& run_dir, const std::vector<fs::path>& outputs) {
  json out = json::object();
  for (const auto& p : outputs) {
    if (fs::is_directory(p)) {
      const json tree = hash_tree(p);
      for (const auto& [k, v] : tree.items()) out[fs::relative(p / k, run_dir).generic_string()] = v;
    } else {
      out[fs::relative(p, run_dir).generic_string()] = hash_file(p);
    }
  }
  return out;
}

void stamp(const fs::path& run_dir, const std::string& stage, const json& inputs, const json& seeds,
           const json& config, const std::vector<fs::path>& outputs) {
  write_json_file(run_dir / "logs" / ("stage_" + stage + ".json"),
                  {{"stage", stage},
                   {"inputs", inputs},
                   {"seeds", seeds},
                   {"config", config},
                   {"config_hash", hash_json(config)},
                   {"outputs", output_hashes(run_dir, outputs)}});
}

SplitFractions fractions_from_json(const json& j) {
  SplitFractions f;
  f.train = j.value("train", f.train);
  f.val = j.value("val", f.val);
  f.test = j.value("test", f.test);
  return f;
}

}  // namespace

void validate_pipeline_config(const json& config, const PipelineOptions& options) {
  check_config(prepare(config, options));
}

PipelineResult run_pipeline(const json& config, const PipelineOptions& options) {
  const Resolved r = prepare(config, options);
  check_config(r);
  const json& c = r.config;

  PipelineResult result;
  result.run_dir = options.run_dir ? *options.run_dir
                                   : resolve(r.base, c.value("output_root", "runs")) / timestamp();
  const fs::path run = result.run_dir;
  for (const char* d : {"data", "episodes", "checkpoints", "reports", "logs"}) fs::create_directories(run / d);
  write_json_file(run / "logs" / "pipeline_config.json", c);

  auto say = [&](const std::string& msg) {
    if (options.verbose) std::cerr << "[pipeline] " << msg << std::endl;
  };
  std::string stage;
  try {
    stage = "gen-data";
    say(stage);
    const json& ds = c["dataset"];
    DatasetManifest manifest;
    json data_inputs = json::object();
    if (ds.contains("manifest")) {
      const fs::path src = resolve(r.base, ds["manifest"].get<std::string>());
      manifest = load_manifest(src);
      validate_manifest(manifest);
      data_inputs["manifest"] = manifest_hash(manifest);
      fs::path manifest_file = fs::is_directory(src) ? src / kManifestFile : src;
      write_json_file(run / "data" / "source.json",
                      {{"manifest", fs::absolute(manifest_file).lexically_normal().string()},
                       {"manifest_hash", manifest_hash(manifest)}});
    } else if (ds.contains("sprites")) {
      const fs::path frames = resolve(r.base, ds["sprites"]["frames_dir"].get<std::string>());
      const fs::path meta = resolve(r.base, ds["sprites"]["metadata"].get<std::string>());
      sprites::IngestOptions io;
      io.image_size = ds["sprites"].value("image_size", io.image_size);
      auto ingested = sprites::ingest_sprites(frames, meta, run / "data", io);
      for (const auto& w : ingested.warnings) say("warning: " + w);
      manifest = std::move(ingested.manifest);
      data_inputs["metadata"] = hash_file(meta);
    } else {
      const PropertySchema schema =
          ds.contains("schema") ? ds["schema"].get<PropertySchema>() : shapes::default_schema();
      json sel = ds.value("selection", json{{"mode", "all"}});
      if (sel.value("mode", "all") == "sampled" && !sel.contains("seed")) sel["seed"] = r.seed;
      manifest = shapes::build_dataset(schema, run / "data", selection_from_json(schema, sel));
    }
    const std::string mhash = manifest_hash(manifest);
    stamp(run, stage, data_inputs, {{"seed", r.seed}}, ds, {run / "data"});

    stage = "split";
    say(stage);
    const json split_cfg = c.value("split", json::object());
    const SplitMode mode = parse_split_mode(split_cfg.value("mode", "unique"));
    const std::uint64_t split_seed = stage_seed(r, split_cfg);
    const SplitPlan plan =
        make_split(manifest, mode, fractions_from_json(split_cfg.value("fractions", json::object())), split_seed);
    const fs::path plan_file = run / "episodes" / "split.json";
    write_json_file(plan_file, plan_to_json(plan));
    stamp(run, stage, {{"manifest_hash", mhash}}, {{"seed", split_seed}}, split_cfg, {plan_file});

    stage = "episodes";
    say(stage);
    const json ep_cfg = c.value("episodes", json::object());
    const EpisodeSetConfig epc = episode_config_from_json(ep_cfg);
    const std::uint64_t ep_seed = stage_seed(r, ep_cfg);
    std::map<SplitTag, EpisodeSet> sets;
    std::vector<fs::path> ep_files;
    for (SplitTag tag : {SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest}) {
      EpisodeSet set = build_episode_set(manifest, plan, tag, epc, ep_seed);
      set.manifest_path = manifest.root / kManifestFile;
      const fs::path f = run / "episodes" / (to_string(tag) + ".jsonl");
      write_episode_file(f, set);
      ep_files.push_back(f);
      sets.emplace(tag, std::move(set));
    }
    stamp(run, stage, {{"manifest_hash", mhash}, {"split", hash_file(plan_file)}}, {{"seed", ep_seed}}, ep_cfg,
          ep_files);

    const ImageSet images(manifest);
    std::vector<std::pair<std::string, fs::path>> checkpoints;
    stage = "train";
    for (const auto& m : model_entries(c)) {
      const std::string name = m.value("name", "model");
      say(stage + " " + name);
      const ModelConfig mc = model_config_from_json(m.value("model", json::object()));
      json tcj = m.value("train", json::object());
      if (!tcj.contains("seed")) tcj["seed"] = r.seed;
      const TrainConfig tc = train_config_from_json(tcj);
      const fs::path mdir = run / "checkpoints" / name;
      TrainOptions to;
      to.manifest_hash = mhash;
      if (options.verbose)
        to.on_epoch = [&](int e, double tl, double vl) {
          say(name + " epoch " + std::to_string(e) + " train " + std::to_string(tl) + " val " + std::to_string(vl));
        };
      const TrainResult tr = train(mc, tc, sets[SplitTag::kTrain].episodes, sets[SplitTag::kVal].episodes, images,
                                   mdir, to);
      checkpoints.emplace_back(name, tr.best_checkpoint);
      const fs::path log_dst = run / "logs" / ("train_" + name + ".csv");
      fs::copy_file(tr.log_file, log_dst, fs::copy_options::overwrite_existing);
      stamp(run, stage + "_" + name, {{"manifest_hash", mhash}, {"train", hash_file(ep_files[0])},
                                      {"val", hash_file(ep_files[1])}},
            {{"seed", tc.seed}}, {{"model", model_config_to_json(mc)}, {"train", train_config_to_json(tc)}},
            {tr.best_checkpoint});
    }

    stage = "eval";
    std::vector<EvaluationResult> evals;
    for (const auto& [name, ck] : checkpoints) {
      say(stage + " " + name);
      EvaluationResult er = evaluate(ck, ep_files[2], name);
      const fs::path out = run / "reports" / name;
      render_report(er, out);
      stamp(run, stage + "_" + name, {{"checkpoint", hash_file(ck)}, {"episodes", hash_file(ep_files[2])}},
            json::object(), {{"model", name}}, {out});
      evals.push_back(std::move(er));
    }

    stage = "report";
    say(stage);
    for (const auto& e : evals) result.reports.insert(result.reports.end(), e.reports.begin(), e.reports.end());
    write_report_csv(result.reports, run / "reports" / "report.csv");
    {
      std::ofstream os(run / "reports" / "report.txt");
      os << format_report_table(result.reports);
    }
    stamp(run, stage, json::object(), json::object(), json::object(),
          {run / "reports" / "report.csv", run / "reports" / "report.txt"});
  } catch (const std::exception& e) {
    throw Error("pipeline stage '" + stage + "' failed: " + e.what());
  }
  return result;
}

}  // namespace aspectfsl
