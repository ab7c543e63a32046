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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/error.hpp"
#include "aspectfsl/evaluation.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/manifest.hpp"
#include "aspectfsl/model.hpp"
#include "aspectfsl/pipeline.hpp"
#include "aspectfsl/shapegen.hpp"
#include "aspectfsl/sprites.hpp"
#include "aspectfsl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aspectfsl;

namespace {

json load_json_or_empty(const std::string& path) {
  return path.empty() ? json::object() : read_json_file(path);
}

void print_reports(const std::vector<DistanceReport>& reports) { std::cout << format_report_table(reports); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect-based few-shot learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override every seed");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render the geometric shapes dataset");
  std::string gen_out, gen_schema, gen_combos, gen_selection = "all";
  std::size_t gen_k = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--schema", gen_schema, "Schema JSON (default: geometric_shapes)");
  gen->add_option("--selection", gen_selection, "all | sampled | explicit")
      ->check(CLI::IsMember({"all", "sampled", "explicit"}));
  gen->add_option("-k,--sample", gen_k, "Render K sampled combinations (implies --selection sampled)");
  gen->add_option("--combos", gen_combos, "JSON list of property maps for --selection explicit");

  // ingest-sprites
  auto* ing = app.add_subcommand("ingest-sprites", "Convert sprite frames plus metadata into a dataset");
  std::string ing_frames, ing_meta, ing_out;
  int ing_size = 112;
  ing->add_option("--frames", ing_frames, "Frames directory")->required();
  ing->add_option("--meta,--metadata", ing_meta, "Metadata JSON")->required();
  ing->add_option("--out", ing_out, "Output directory")->required();
  ing->add_option("--image-size", ing_size, "Output image size");

  // split
  auto* spl = app.add_subcommand("split", "Partition a dataset into train/val/test pools");
  std::string spl_manifest, spl_mode = "unique", spl_out;
  SplitFractions fr;
  spl->add_option("--manifest", spl_manifest, "Dataset manifest")->required();
  spl->add_option("--mode", spl_mode, "unique | query")->check(CLI::IsMember({"unique", "query"}));
  spl->add_option("--train", fr.train);
  spl->add_option("--val", fr.val);
  spl->add_option("--test", fr.test);
  spl->add_option("--out", spl_out, "Split plan JSON")->required();

  // episodes
  auto* eps = app.add_subcommand("episodes", "Sample an episode file");
  std::string eps_manifest, eps_split = "unique", eps_plan, eps_out, eps_tag = "test", eps_aspect;
  EpisodeSetConfig epc;
  std::optional<int> eps_shared;
  SplitFractions eps_fr;
  eps->add_option("--manifest", eps_manifest, "Dataset manifest")->required();
  eps->add_option("--split", eps_split, "unique | query")->check(CLI::IsMember({"unique", "query"}));
  eps->add_option("--plan", eps_plan, "Split plan from `split` (default: computed from --split and --seed)");
  eps->add_option("--tag", eps_tag, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  eps->add_option("--n", epc.support_size, "Support set size");
  eps->add_option("--per-query", epc.episodes_per_query, "Support sets per query (val/test)");
  eps->add_option("--count", epc.count, "Number of episodes (train)");
  eps->add_option("--aspect", eps_aspect, "Fix the discriminating property");
  eps->add_option("--shared-count", eps_shared, "Fix the shared count s");
  eps->add_option("--train", eps_fr.train);
  eps->add_option("--val", eps_fr.val);
  eps->add_option("--test", eps_fr.test);
  eps->add_option("--out", eps_out, "Episode file (JSONL)")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train a model on episode files");
  std::string trn_model, trn_train, trn_tr_eps, trn_val_eps, trn_out;
  bool trn_resume = false;
  trn->add_option("--model-config", trn_model, "Model config JSON");
  trn->add_option("--train-config", trn_train, "Train config JSON");
  trn->add_option("--train-episodes", trn_tr_eps, "Training episode file")->required();
  trn->add_option("--val-episodes", trn_val_eps, "Validation episode file")->required();
  trn->add_option("--out", trn_out, "Run directory")->required();
  trn->add_flag("--resume", trn_resume, "Continue from <out>/checkpoints/last.ckpt");

  // eval
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on an episode file");
  std::string evl_ck, evl_eps, evl_out, evl_name;
  evl->add_option("--checkpoint", evl_ck, "Checkpoint file")->required();
  evl->add_option("--episodes", evl_eps, "Episode file")->required();
  evl->add_option("--out", evl_out, "Report directory")->required();
  evl->add_option("--name", evl_name, "Model name in the report");

  // report
  auto* rep = app.add_subcommand("report", "Merge report.csv files into one table");
  std::vector<std::string> rep_in;
  std::string rep_out;
  rep->add_option("--inputs", rep_in, "Report directories or report.csv files")->required();
  rep->add_option("--out", rep_out, "Output directory");

  // pipeline
  auto* pip = app.add_subcommand("pipeline", "Run every stage from one config");
  std::string pip_cfg, pip_run;
  bool pip_check = false;
  pip->add_option("--config", pip_cfg, "Pipeline config JSON")->required();
  pip->add_option("--run-dir", pip_run, "Run directory (default: <output_root>/<timestamp>)");
  pip->add_flag("--check", pip_check, "Validate the config and inputs only");

  // model-info
  auto* inf = app.add_subcommand("model-info", "Print the stage shape table of a model config");
  std::string inf_cfg;
  inf->add_option("--config", inf_cfg, "Model config JSON (default config when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const PropertySchema schema =
          gen_schema.empty() ? shapes::default_schema() : read_json_file(gen_schema).get<PropertySchema>();
      if (gen_k > 0 && gen_selection == "all") gen_selection = "sampled";
      json sel{{"mode", gen_selection}, {"k", gen_k}, {"seed", seed.value_or(0)}};
      if (gen_selection == "explicit") sel["combos"] = read_json_file(gen_combos);
      const auto m = shapes::build_dataset(schema, gen_out, selection_from_json(schema, sel));
      std::cout << "wrote " << m.records.size() << " images, manifest " << (fs::path(gen_out) / kManifestFile).string()
                << " hash " << manifest_hash(m) << "\n";
    } else if (ing->parsed()) {
      const auto r = sprites::ingest_sprites(ing_frames, ing_meta, ing_out, {ing_size});
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "ingested " << r.manifest.records.size() << " frames, hash " << manifest_hash(r.manifest) << "\n";
    } else if (spl->parsed()) {
      const auto m = load_manifest(spl_manifest);
      const auto plan = make_split(m, parse_split_mode(spl_mode), fr, seed.value_or(0));
      write_json_file(spl_out, plan_to_json(plan));
      for (SplitTag t : {SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest})
        std::cout << to_string(t) << ": " << plan.query_pools[static_cast<int>(t)].size() << " queries\n";
    } else if (eps->parsed()) {
      const auto m = load_manifest(eps_manifest);
      const SplitPlan plan = eps_plan.empty() ? make_split(m, parse_split_mode(eps_split), eps_fr, seed.value_or(0))
                                              : plan_from_json(read_json_file(eps_plan));
      if (!eps_aspect.empty()) epc.aspect = eps_aspect;
      epc.shared_count = eps_shared;
      EpisodeSet set = build_episode_set(m, plan, parse_split_tag(eps_tag), epc, seed.value_or(0));
      set.manifest_path = fs::is_directory(eps_manifest) ? fs::path(eps_manifest) / kManifestFile : fs::path(eps_manifest);
      write_episode_file(eps_out, set);
      std::cout << "wrote " << set.episodes.size() << " episodes to " << eps_out << "\n";
    } else if (trn->parsed()) {
      const ModelConfig mc = model_config_from_json(load_json_or_empty(trn_model));
      json tj = load_json_or_empty(trn_train);
      if (seed) tj["seed"] = *seed;
      const TrainConfig tc = train_config_from_json(tj);
      const EpisodeSet tr = read_episode_file(trn_tr_eps);
      const EpisodeSet va = read_episode_file(trn_val_eps);
      if (tr.manifest_hash != va.manifest_hash)
        throw Error("training and validation episodes refer to different datasets");
      const auto m = load_manifest(tr.manifest_path);
      if (manifest_hash(m) != tr.manifest_hash) throw Error("manifest changed since the episodes were built");
      const ImageSet images(m);
      TrainOptions opts;
      opts.resume = trn_resume;
      opts.manifest_hash = tr.manifest_hash;
      opts.on_epoch = [](int e, double tl, double vl) {
        std::cerr << "epoch " << e << " train_loss " << tl << " val_loss " << vl << std::endl;
      };
      const auto r = train(mc, tc, tr.episodes, va.episodes, images, trn_out, opts);
      std::cout << "best val loss " << r.best_val_loss << ", checkpoint " << r.best_checkpoint.string() << "\n";
    } else if (evl->parsed()) {
      const auto r = evaluate(evl_ck, evl_eps, evl_name.empty() ? std::nullopt : std::optional(evl_name));
      render_report(r, evl_out);
      print_reports(r.reports);
    } else if (rep->parsed()) {
      std::vector<DistanceReport> all;
      for (const auto& in : rep_in) {
        const fs::path p = fs::is_directory(in) ? fs::path(in) / "report.csv" : fs::path(in);
        const auto r = read_report_csv(p);
        all.insert(all.end(), r.begin(), r.end());
      }
      if (all.empty()) throw Error("no report rows found");
      if (!rep_out.empty()) {
        fs::create_directories(rep_out);
        write_report_csv(all, fs::path(rep_out) / "report.csv");
        std::ofstream(fs::path(rep_out) / "report.txt") << format_report_table(all);
      }
      print_reports(all);
    } else if (pip->parsed()) {
      PipelineOptions opts;
      opts.seed = seed;
      opts.base_dir = fs::path(pip_cfg).parent_path();
      if (opts.base_dir.empty()) opts.base_dir = ".";
      if (!pip_run.empty()) opts.run_dir = pip_run;
      opts.verbose = true;
      const json cfg = read_json_file(pip_cfg);
      if (pip_check) {
        validate_pipeline_config(cfg, opts);
        std::cout << "config ok\n";
      } else {
        const auto r = run_pipeline(cfg, opts);
        print_reports(r.reports);
        std::cout << "run directory " << r.run_dir.string() << "\n";
      }
    } else if (inf->parsed()) {
      const ModelConfig mc = model_config_from_json(load_json_or_empty(inf_cfg));
      std::cout << format_shape_table(mc);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
