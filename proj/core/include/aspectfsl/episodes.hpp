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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/manifest.hpp"

namespace aspectfsl {

enum class SplitMode { kUnique, kQuery };
enum class SplitTag { kTrain = 0, kVal = 1, kTest = 2 };

std::string to_string(SplitMode mode);
std::string to_string(SplitTag tag);
SplitMode parse_split_mode(const std::string& s);
SplitTag parse_split_tag(const std::string& s);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Query and support pools per split tag.
///
/// unique: pools partition the sample ids and each split draws its supports
/// from its own pool. query: query pools partition the ids, every split may
/// use every sample as a support element.
struct SplitPlan {
  SplitMode mode = SplitMode::kUnique;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  std::array<std::vector<std::string>, 3> query_pools;
  std::array<std::vector<std::string>, 3> support_pools;

  const std::vector<std::string>& queries(SplitTag tag) const { return query_pools[static_cast<int>(tag)]; }
  const std::vector<std::string>& supports(SplitTag tag) const { return support_pools[static_cast<int>(tag)]; }

  bool operator==(const SplitPlan& o) const {
    return mode == o.mode && seed == o.seed && query_pools == o.query_pools &&
           support_pools == o.support_pools;
  }
};

nlohmann::json plan_to_json(const SplitPlan& plan);
SplitPlan plan_from_json(const nlohmann::json& j);

/// Deterministic in `seed`. Pool sizes are floor(fraction·n) for val and
/// test; train takes the remainder. Throws InfeasibleError when a split with
/// a positive fraction cannot host a single 2-way episode.
SplitPlan make_split(const DatasetManifest& manifest, SplitMode mode, SplitFractions fractions,
                     std::uint64_t seed);

struct Episode {
  std::string query_id;
  std::vector<std::string> support_ids;
  std::string aspect_property;
  int positive_index = 0;
  int shared_count = 0;
  SplitTag split = SplitTag::kTrain;

  bool operator==(const Episode&) const = default;
};

nlohmann::json episode_to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);

struct SampleRequest {
  int support_size = 4;
  std::optional<std::string> aspect;
  std::optional<int> shared_count;
  std::optional<std::string> query_id;
  int max_retries = 1000;
};

/// Constructive rejection sampler over one split's pools.
///
/// Each attempt fixes a query, an aspect property and a shared count, then
/// composes the support vectors that satisfy all three support-set
/// constraints and looks them up in the support pool. Supports share one
/// object type different from the query's.
class EpisodeSampler {
 public:
  EpisodeSampler(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag);

  Episode sample(const SampleRequest& request, std::mt19937_64& rng) const;

  const std::vector<std::string>& queries() const { return queries_; }
  /// Aspect properties whose domain has at least `support_size` values.
  std::vector<std::string> aspect_candidates(int support_size) const;
  /// Largest shared count: number of properties minus object and aspect.
  int max_shared_count() const { return static_cast<int>(schema_.size()) - 2; }

 private:
  std::size_t ordinal(const std::vector<int>& codes) const;

  PropertySchema schema_;
  SplitTag tag_;
  std::vector<std::string> queries_;
  std::unordered_map<std::string, std::vector<int>> codes_;
  std::unordered_map<std::size_t, std::string> support_lookup_;
};

Episode sample_episode(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag,
                       const SampleRequest& request, std::mt19937_64& rng);

/// Independent RNG stream for episode `index`.
std::mt19937_64 episode_rng(std::uint64_t seed, std::uint64_t index, SplitTag tag);

struct EpisodeSetConfig {
  int support_size = 4;
  /// Used for val/test: every query image gets this many support sets.
  int episodes_per_query = 10;
  /// Used for train: total number of episodes.
  std::size_t count = 2000;
  int max_retries = 1000;
  std::optional<std::string> aspect;
  std::optional<int> shared_count;
};

nlohmann::json config_to_json(const EpisodeSetConfig& c);
EpisodeSetConfig episode_config_from_json(const nlohmann::json& j);

struct EpisodeSet {
  SplitTag split = SplitTag::kTest;
  SplitMode mode = SplitMode::kUnique;
  EpisodeSetConfig config;
  std::uint64_t seed = 0;
  std::string manifest_hash;
  /// Absolute or relative-to-cwd path of the manifest; stored relative to
  /// the episode file on disk.
  std::filesystem::path manifest_path;
  std::vector<Episode> episodes;

  std::string config_hash() const;
  bool operator==(const EpisodeSet& o) const {
    return split == o.split && mode == o.mode && seed == o.seed && manifest_hash == o.manifest_hash &&
           config_to_json(config) == config_to_json(o.config) && episodes == o.episodes;
  }
};

/// Train: `config.count` episodes with uniformly drawn queries. Val/test:
/// `episodes_per_query` episodes for every query image. Shared counts cycle
/// over all feasible levels so per-level counts differ by at most one.
EpisodeSet build_episode_set(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag,
                             const EpisodeSetConfig& config, std::uint64_t seed);

/// JSON lines: a header object, then one episode per line.
void write_episode_file(const std::filesystem::path& path, const EpisodeSet& set);
EpisodeSet read_episode_file(const std::filesystem::path& path);

}  // namespace aspectfsl
