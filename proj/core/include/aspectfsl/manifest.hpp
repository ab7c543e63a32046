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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/properties.hpp"

namespace aspectfsl {

inline constexpr const char* kManifestFormat = "aspectfsl.manifest/1";
inline constexpr const char* kManifestFile = "manifest.json";

struct ManifestRecord {
  std::string sample_id;
  /// Relative to the manifest's directory.
  std::string image;
  PropertyVector properties;

  bool operator==(const ManifestRecord&) const = default;
};

/// A dataset: schema, one record per image, and the parameters that made it.
/// Shape-generated and ingested sprite datasets share this format.
struct DatasetManifest {
  PropertySchema schema;
  std::vector<ManifestRecord> records;
  nlohmann::json generator_config = nlohmann::json::object();
  /// Directory the manifest was loaded from or saved to; not serialized.
  std::filesystem::path root;

  std::size_t index_of(const std::string& sample_id) const;
  std::filesystem::path image_path(const ManifestRecord& record) const { return root / record.image; }

  bool operator==(const DatasetManifest& o) const {
    return schema == o.schema && records == o.records && generator_config == o.generator_config;
  }
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Unique ids, complete in-domain vectors, no duplicated vectors. When
/// `check_images` is set, every image must decode to `image_size`² RGB.
void validate_manifest(const DatasetManifest& manifest, bool check_images = false,
                       int image_size = 112);

/// Writes `<dir>/manifest.json` and sets `manifest.root = dir`.
std::filesystem::path save_manifest(DatasetManifest& manifest, const std::filesystem::path& dir);
/// Accepts either the manifest file or its directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Content hash of the serialized manifest.
std::string manifest_hash(const DatasetManifest& manifest);

/// All dataset images decoded to planar float CHW, unit interval.
class ImageSet {
 public:
  ImageSet() = default;
  explicit ImageSet(const DatasetManifest& manifest);

  int image_size() const { return size_; }
  std::size_t count() const { return index_.size(); }
  std::size_t stride() const { return static_cast<std::size_t>(size_) * size_ * 3; }
  std::span<const float> image(const std::string& sample_id) const;

 private:
  int size_ = 0;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace aspectfsl
