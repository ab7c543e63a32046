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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/model.hpp"
#include "aspectfsl/pipeline.hpp"
#include "aspectfsl/training.hpp"
#include "test_support.hpp"

namespace aspectfsl {
namespace {

using nlohmann::json;

json minimal_config() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {
      "generator": "shapes",
      "schema": {
        "name": "mini", "object_property": "shape",
        "properties": [
          {"name": "shape", "domain": ["triangle", "square"]},
          {"name": "color", "domain": ["red", "blue"]},
          {"name": "thickness", "domain": ["thin", "thick"]},
          {"name": "pattern", "domain": ["solid", "dots"]}
        ]
      }
    },
    "split": {"mode": "query", "fractions": {"train": 0.5, "val": 0.25, "test": 0.25}},
    "episodes": {"support_size": 2, "count": 32, "episodes_per_query": 3},
    "models": [
      {"name": "baseline",
       "model": {"use_dstm": false, "backbone_channels": [4], "dstm_channels": 4, "mask_channels": 4},
       "train": {"epochs": 2, "episodes_per_epoch": 16, "batch_size": 8}},
      {"name": "dstm",
       "model": {"backbone_channels": [4], "dstm_channels": 4, "mask_channels": 4},
       "train": {"epochs": 2, "episodes_per_epoch": 16, "batch_size": 8}}
    ]
  })");
}

TEST(Pipeline, MinimalRunCompletes) {
  testing::TempDir dir;
  PipelineOptions opts;
  opts.run_dir = dir / "run";
  const auto r = run_pipeline(minimal_config(), opts);
  for (const char* d : {"data", "episodes", "checkpoints", "reports", "logs"})
    EXPECT_TRUE(std::filesystem::is_directory(r.run_dir / d)) << d;
  for (const auto& stage : {"gen-data", "split", "episodes", "train_dstm", "eval_dstm", "report"})
    EXPECT_TRUE(std::filesystem::exists(r.run_dir / "logs" / (std::string("stage_") + stage + ".json"))) << stage;
  EXPECT_TRUE(std::filesystem::exists(r.run_dir / "reports" / "report.csv"));
  std::size_t dstm_rows = 0;
  for (const auto& rep : r.reports) dstm_rows += rep.model == "dstm";
  EXPECT_GE(dstm_rows, 1u);
  const auto stamp = read_json_file(r.run_dir / "logs" / "stage_episodes.json");
  EXPECT_EQ(stamp["seeds"]["seed"], 3);
  EXPECT_EQ(stamp["outputs"]["episodes/test.jsonl"], hash_file(r.run_dir / "episodes" / "test.jsonl"));
}

TEST(Pipeline, RerunIsByteIdenticalForDeterministicStages) {
  testing::TempDir dir;
  json cfg = minimal_config();
  cfg["models"] = json::array({cfg["models"][1]});
  PipelineOptions a, b;
  a.run_dir = dir / "a";
  b.run_dir = dir / "b";
  run_pipeline(cfg, a);
  run_pipeline(cfg, b);
  EXPECT_EQ(hash_tree(dir / "a" / "data"), hash_tree(dir / "b" / "data"));
  EXPECT_EQ(hash_tree(dir / "a" / "episodes"), hash_tree(dir / "b" / "episodes"));
  for (const char* s : {"stage_gen-data.json", "stage_split.json", "stage_episodes.json"})
    EXPECT_EQ(hash_file(dir / "a" / "logs" / s), hash_file(dir / "b" / "logs" / s)) << s;
}

TEST(Pipeline, SeedOverrideChangesEpisodes) {
  testing::TempDir dir;
  json cfg = minimal_config();
  cfg["models"] = json::array({cfg["models"][1]});
  PipelineOptions a, b;
  a.run_dir = dir / "a";
  b.run_dir = dir / "b";
  b.seed = 99;
  run_pipeline(cfg, a);
  run_pipeline(cfg, b);
  EXPECT_NE(hash_file(dir / "a" / "episodes" / "train.jsonl"), hash_file(dir / "b" / "episodes" / "train.jsonl"));
  EXPECT_EQ(read_json_file(dir / "b" / "logs" / "stage_split.json")["seeds"]["seed"], 99);
}

TEST(Pipeline, MissingDatasetFailsBeforeAnyWork) {
  testing::TempDir dir;
  json cfg = minimal_config();
  cfg["dataset"] = {{"manifest", (dir / "nowhere" / "manifest.json").string()}};
  PipelineOptions opts;
  opts.run_dir = dir / "run";
  EXPECT_THROW(run_pipeline(cfg, opts), IoError);
  EXPECT_FALSE(std::filesystem::exists(dir / "run"));
}

TEST(Pipeline, StageFailureNamesStage) {
  testing::TempDir dir;
  json cfg = minimal_config();
  cfg["episodes"]["support_size"] = 3;
  PipelineOptions opts;
  opts.run_dir = dir / "run";
  try {
    run_pipeline(cfg, opts);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'episodes'"), std::string::npos) << e.what();
  }
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

TEST(Cli, DataStagesAreByteIdenticalAcrossRuns) {
  testing::TempDir dir;
  const std::string cli = AFSL_CLI_PATH;
  for (const char* tag : {"a", "b"}) {
    const auto d = dir / tag;
    ASSERT_EQ(run(cli + " gen-data --out " + (d / "data").string() + " --seed 5"), 0);
    ASSERT_EQ(run(cli + " split --manifest " + (d / "data").string() + " --mode query --seed 5 --out " +
                  (d / "split.json").string()),
              0);
    ASSERT_EQ(run(cli + " episodes --manifest " + (d / "data").string() + " --plan " + (d / "split.json").string() +
                  " --tag test --n 2 --per-query 10 --seed 5 --out " + (d / "test.jsonl").string()),
              0);
  }
  EXPECT_EQ(hash_tree(dir / "a" / "data"), hash_tree(dir / "b" / "data"));
  EXPECT_EQ(hash_file(dir / "a" / "split.json"), hash_file(dir / "b" / "split.json"));
  EXPECT_EQ(hash_file(dir / "a" / "test.jsonl"), hash_file(dir / "b" / "test.jsonl"));
}

TEST(Cli, ModelInfoAndErrors) {
  const std::string cli = AFSL_CLI_PATH;
  EXPECT_EQ(run(cli + " model-info"), 0);
  EXPECT_NE(run(cli + " eval --checkpoint /nonexistent.ckpt --episodes /nonexistent.jsonl --out /tmp/x"), 0);
  EXPECT_NE(run(cli + " bogus"), 0);
}

TEST(Configs, ShippedExamplesAreValid) {
  const std::filesystem::path dir = AFSL_CONFIG_DIR;
  int seen = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    SCOPED_TRACE(name);
    const json j = read_json_file(e.path());
    if (name.starts_with("model_")) {
      EXPECT_NO_THROW(model_config_from_json(j).validate());
    } else if (name.starts_with("train_")) {
      EXPECT_NO_THROW(train_config_from_json(j));
    } else if (name.starts_with("pipeline_")) {
      PipelineOptions opts;
      opts.base_dir = dir;
      EXPECT_NO_THROW(validate_pipeline_config(j, opts));
    } else {
      EXPECT_NO_THROW(j.get<PropertySchema>());
    }
    ++seen;
  }
  EXPECT_GE(seen, 7);
}

}  // namespace
}  // namespace aspectfsl
