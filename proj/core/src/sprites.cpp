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

#include "aspectfsl/sprites.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/image.hpp"

namespace aspectfsl::sprites {

namespace {

struct FrameEntry {
  std::string file;
  std::map<std::string, std::string> properties;
  std::optional<std::array<int, 4>> rect;
  std::optional<std::pair<int, int>> cell;
};

struct Sheet {
  int cell_width = 0;
  int cell_height = 0;
  std::string row_property;
  std::vector<std::string> row_values;
};

FrameEntry parse_frame(const nlohmann::json& f) {
  FrameEntry e;
  e.file = f.at("file").get<std::string>();
  e.properties = f.value("properties", std::map<std::string, std::string>{});
  if (f.contains("cell")) {
    const auto& c = f["cell"];
    if (c.contains("row"))
      e.cell = std::make_pair(c.at("row").get<int>(), c.at("col").get<int>());
    else
      e.rect = std::array<int, 4>{c.at("x").get<int>(), c.at("y").get<int>(), c.at("w").get<int>(),
                                  c.at("h").get<int>()};
  }
  return e;
}

PropertySchema infer_schema(const std::vector<FrameEntry>& frames) {
  // Default domains, extended by any value observed in the metadata.
  std::vector<Property> props = default_schema().properties();
  for (auto& p : props) {
    std::set<std::string> extra;
    for (const auto& f : frames)
      if (auto it = f.properties.find(p.name); it != f.properties.end()) extra.insert(it->second);
    for (const auto& v : extra)
      if (std::find(p.domain.begin(), p.domain.end(), v) == p.domain.end()) p.domain.push_back(v);
  }
  return PropertySchema("sprites", std::move(props), "body");
}

bool has_files(const std::filesystem::path& dir) {
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) return true;
  return false;
}

}  // namespace

PropertySchema default_schema() {
  return PropertySchema("sprites",
                        {{"body", {"light", "tanned", "dark", "darkelf"}},
                         {"stance", {"walk", "spellcast", "slash"}},
                         {"shirt", {"white", "red", "blue", "green"}},
                         {"pants", {"white", "red", "blue", "green"}},
                         {"hair", {"blonde", "brown", "black", "red"}}},
                        "body");
}

IngestResult ingest_sprites(const std::filesystem::path& frames_dir, const std::filesystem::path& metadata,
                            const std::filesystem::path& out_dir, const IngestOptions& options) {
  if (!std::filesystem::is_directory(frames_dir))
    throw IoError("frames directory does not exist: " + frames_dir.string());
  const nlohmann::json meta = read_json_file(metadata);

  std::vector<FrameEntry> frames;
  std::optional<PropertySchema> schema;
  Sheet sheet;
  try {
    const nlohmann::json& list = meta.is_array() ? meta : meta.at("frames");
    for (const auto& f : list) frames.push_back(parse_frame(f));
    if (meta.is_object()) {
      if (meta.contains("schema")) schema = meta["schema"].get<PropertySchema>();
      if (meta.contains("sheet")) {
        const auto& s = meta["sheet"];
        sheet.cell_width = s.value("cell_width", 0);
        sheet.cell_height = s.value("cell_height", 0);
        sheet.row_property = s.value("row_property", "");
        sheet.row_values = s.value("row_values", std::vector<std::string>{});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(metadata.string() + ": " + e.what());
  }

  IngestResult result;
  result.manifest.generator_config = {{"generator", "sprites"},
                                      {"image_size", options.image_size},
                                      {"metadata_hash", hash_file(metadata)}};
  if (!has_files(frames_dir) || frames.empty()) {
    result.warnings.push_back("no frames to ingest from " + frames_dir.string() +
                              (frames.empty() ? "" : "; metadata entries skipped"));
    result.manifest.schema = schema ? *schema : default_schema();
    save_manifest(result.manifest, out_dir);
    return result;
  }

  for (auto& f : frames) {
    if (f.cell && !sheet.row_property.empty() && !f.properties.count(sheet.row_property)) {
      const auto row = static_cast<std::size_t>(f.cell->first);
      if (row < sheet.row_values.size()) f.properties[sheet.row_property] = sheet.row_values[row];
    }
  }
  if (!schema) schema = infer_schema(frames);
  result.manifest.schema = *schema;

  std::vector<std::string> problems;
  std::map<PropertyVector, std::string> seen;
  std::vector<Image> images;
  for (const auto& f : frames) {
    PropertyVector v{schema->name(), f.properties};
    try {
      validate_vector(*schema, v);
    } catch (const SchemaError& e) {
      problems.push_back(f.file + ": " + e.what());
      continue;
    }
    if (auto [it, fresh] = seen.emplace(v, f.file); !fresh) {
      problems.push_back(f.file + ": duplicate property vector of " + it->second);
      continue;
    }
    const auto path = frames_dir / f.file;
    if (!std::filesystem::is_regular_file(path)) {
      problems.push_back(f.file + ": missing frame file");
      continue;
    }
    try {
      Image img = read_png(path);
      if (f.rect) {
        img = crop(img, (*f.rect)[0], (*f.rect)[1], (*f.rect)[2], (*f.rect)[3]);
      } else if (f.cell) {
        if (sheet.cell_width <= 0 || sheet.cell_height <= 0)
          throw ShapeError("row/col cell needs sheet.cell_width and sheet.cell_height");
        img = crop(img, f.cell->second * sheet.cell_width, f.cell->first * sheet.cell_height,
                   sheet.cell_width, sheet.cell_height);
      }
      images.push_back(pad_and_scale(img, options.image_size));
    } catch (const Error& e) {
      problems.push_back(f.file + ": " + e.what());
      continue;
    }
    char id[32];
    std::snprintf(id, sizeof id, "sprite_%05zu", result.manifest.records.size());
    result.manifest.records.push_back({id, std::string("images/") + id + ".png", std::move(v)});
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " invalid sprite record(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw SchemaError(msg);
  }

  std::filesystem::create_directories(out_dir / "images");
  for (std::size_t i = 0; i < images.size(); ++i)
    write_png(out_dir / result.manifest.records[i].image, images[i]);
  save_manifest(result.manifest, out_dir);
  return result;
}

}  // namespace aspectfsl::sprites
