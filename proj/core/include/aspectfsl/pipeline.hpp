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


#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/evaluation.hpp"
#include "aspectfsl/shapegen.hpp"

namespace aspectfsl {

shapes::ComboSelection selection_from_json(const PropertySchema& schema, const nlohmann::json& j);

struct PipelineOptions {
  /// Replaces every seed in the config.
  std::optional<std::uint64_t> seed;
  /// Use this run directory instead of `<output_root>/<timestamp>`.
  std::optional<std::filesystem::path> run_dir;
  /// Relative paths in the config resolve against this directory.
  std::filesystem::path base_dir = ".";
  bool verbose = false;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  std::vector<DistanceReport> reports;
};

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// Checks the config and every referenced input without doing any work.
void validate_pipeline_config(const nlohmann::json& config, const PipelineOptions& options = {});

/// gen-data → split → episodes → train → eval → report. Each stage writes
/// `logs/stage_<name>.json` with its inputs, seeds, config hash and output
/// hashes. A failing stage is rethrown as Error naming the stage.
PipelineResult run_pipeline(const nlohmann::json& config, const PipelineOptions& options = {});

/// Hashes of every regular file below `dir`, keyed by relative path.
nlohmann::json hash_tree(const std::filesystem::path& dir);

}  // namespace aspectfsl
