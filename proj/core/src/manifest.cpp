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

#include "aspectfsl/manifest.hpp"

#include <map>
#include <set>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/image.hpp"

namespace aspectfsl {

std::size_t DatasetManifest::index_of(const std::string& sample_id) const {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].sample_id == sample_id) return i;
  throw Error("unknown sample id '" + sample_id + "'");
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : manifest.records)
    records.push_back({{"sample_id", r.sample_id}, {"image", r.image}, {"properties", r.properties.values}});
  return {{"format", kManifestFormat},
          {"schema", manifest.schema},
          {"generator_config", manifest.generator_config},
          {"records", records}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kManifestFormat)
    throw IoError("unsupported manifest format '" + j.value("format", "") + "'");
  DatasetManifest m;
  m.schema = j.at("schema").get<PropertySchema>();
  m.generator_config = j.value("generator_config", nlohmann::json::object());
  for (const auto& r : j.at("records")) {
    m.records.push_back({r.at("sample_id").get<std::string>(), r.at("image").get<std::string>(),
                         {m.schema.name(), r.at("properties").get<std::map<std::string, std::string>>()}});
  }
  return m;
}

void validate_manifest(const DatasetManifest& manifest, bool check_images, int image_size) {
  std::set<std::string> ids;
  std::map<PropertyVector, std::string> vectors;
  for (const auto& r : manifest.records) {
    if (!ids.insert(r.sample_id).second) throw SchemaError("duplicate sample id '" + r.sample_id + "'");
    try {
      validate_vector(manifest.schema, r.properties);
    } catch (const SchemaError& e) {
      throw SchemaError("record '" + r.sample_id + "': " + e.what());
    }
    auto [it, fresh] = vectors.emplace(r.properties, r.sample_id);
    if (!fresh)
      throw SchemaError("records '" + it->second + "' and '" + r.sample_id +
                        "' share the same property vector");
    if (check_images) {
      const Image img = read_png(manifest.image_path(r));
      if (img.width() != image_size || img.height() != image_size)
        throw ShapeError("image for '" + r.sample_id + "' is " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
    }
  }
}

std::filesystem::path save_manifest(DatasetManifest& manifest, const std::filesystem::path& dir) {
  manifest.root = dir;
  const auto path = dir / kManifestFile;
  write_json_file(path, manifest_to_json(manifest));
  return path;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kManifestFile : path;
  DatasetManifest m;
  try {
    m = manifest_from_json(read_json_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  m.root = file.parent_path();
  return m;
}

std::string manifest_hash(const DatasetManifest& manifest) { return hash_json(manifest_to_json(manifest)); }

ImageSet::ImageSet(const DatasetManifest& manifest) {
  for (const auto& r : manifest.records) {
    const Image img = read_png(manifest.image_path(r));
    if (img.width() != img.height()) throw ShapeError("image for '" + r.sample_id + "' is not square");
    if (size_ == 0) size_ = img.width();
    if (img.width() != size_) throw ShapeError("dataset images differ in size");
    index_.emplace(r.sample_id, index_.size());
    append_chw(img, data_);
  }
}

std::span<const float> ImageSet::image(const std::string& sample_id) const {
  auto it = index_.find(sample_id);
  if (it == index_.end()) throw Error("no image for sample '" + sample_id + "'");
  return std::span<const float>(data_).subspan(it->second * stride(), stride());
}

}  // namespace aspectfsl
