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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/manifest.hpp"
#include "aspectfsl/model.hpp"

namespace aspectfsl {

struct EpisodeDistances {
  double pos = 0;
  std::vector<double> negs;
};

/// Euclidean distances from the query to every support vector.
std::vector<double> support_distances(std::span<const float> query, std::span<const std::span<const float>> support);

EpisodeDistances episode_distances(std::span<const float> query, std::span<const std::span<const float>> support,
                                   int positive_index);

/// |neg − pos| / pos.
double distance_ratio(double pos_mean, double neg_mean);

/// Interval from the CI endpoints. Throws when pos_mean − pos_ci ≤ 0.
std::pair<double, double> distance_ratio_interval(double pos_mean, double pos_ci, double neg_mean, double neg_ci);

/// 1.96 · sample standard deviation / √n (0 for n < 2).
double ci95(std::span<const double> values);

struct DistanceReport {
  std::string model;
  std::string split_mode;
  int shared_count = 0;
  std::size_t n_episodes = 0;
  double avg_pos = 0;
  double pos_ci = 0;
  double avg_neg = 0;
  double neg_ci = 0;
  double ratio_lo = 0;
  double ratio_hi = 0;
  double match_accuracy = 0;

  bool operator==(const DistanceReport&) const = default;
};

struct EpisodeRecord {
  std::size_t index = 0;
  std::string query_id;
  std::vector<std::string> support_ids;
  std::string aspect_property;
  int shared_count = 0;
  int positive_index = 0;
  int predicted_index = 0;
  std::vector<double> distances;
};

struct EvaluationResult {
  std::vector<DistanceReport> reports;
  std::vector<EpisodeRecord> episodes;
};

/// Groups per-episode records by shared_count and aggregates them. The negative
/// sample of an episode is the mean of its N−1 negative distances.
std::vector<DistanceReport> aggregate(std::span<const EpisodeRecord> records, const std::string& model,
                                      const std::string& split_mode);

/// Embeds every episode in inference mode. Each episode's positive_index is
/// cross-checked against the aspect oracle.
EvaluationResult evaluate_model(AspectModel<float>& model, const ImageSet& images, const DatasetManifest& manifest,
                                const EpisodeSet& episodes, const std::string& model_name, int batch_size = 16);

/// Loads a checkpoint and an episode file and evaluates. Refuses pairs whose
/// manifest hashes differ.
EvaluationResult evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& episode_file,
                          std::optional<std::string> model_name = std::nullopt, int batch_size = 16);

/// Writes report.csv, report.txt, raw_distances.csv and fig3_export.json.
void render_report(const EvaluationResult& result, const std::filesystem::path& out_dir);

std::string format_report_table(std::span<const DistanceReport> reports);
void write_report_csv(std::span<const DistanceReport> reports, const std::filesystem::path& path);
std::vector<DistanceReport> read_report_csv(const std::filesystem::path& path);

/// Distance annotations for one query under up to `max_sets` support sets.
nlohmann::json fig3_export(std::span<const EpisodeRecord> records, std::size_t max_sets = 3);

}  // namespace aspectfsl
