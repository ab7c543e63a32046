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

#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/image.hpp"
#include "aspectfsl/sprites.hpp"
#include "test_support.hpp"

namespace aspectfsl::sprites {
namespace {

using nlohmann::json;

json frame(const std::string& file, const std::string& body, const std::string& hair = "brown") {
  return {{"file", file},
          {"properties",
           {{"body", body}, {"stance", "walk"}, {"shirt", "red"}, {"pants", "blue"}, {"hair", hair}}}};
}

void write_frame(const std::filesystem::path& path, int w = 64, int h = 48) {
  Image img(w, h, {200, 180, 150});
  for (int x = 10; x < 20; ++x) img.set(x, 10, {10, 10, 10});
  write_png(path, img);
}

TEST(IngestSprites, EmptyFramesDirGivesEmptyManifestWithWarning) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  write_json_file(dir / "meta.json", json::array());
  const auto r = ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
  EXPECT_TRUE(r.manifest.records.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "manifest.json"));
}

TEST(IngestSprites, SingleFrameGivesOneRecord) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  write_frame(dir / "frames" / "a.png");
  write_json_file(dir / "meta.json", json::array({frame("a.png", "light")}));
  const auto r = ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
  ASSERT_EQ(r.manifest.records.size(), 1u);
  EXPECT_EQ(r.manifest.schema.object_property(), "body");
  const Image img = read_png(r.manifest.image_path(r.manifest.records[0]));
  EXPECT_EQ(img.width(), 112);
  EXPECT_EQ(img.height(), 112);
  EXPECT_NO_THROW(validate_manifest(load_manifest(dir / "out"), true, 112));
}

TEST(IngestSprites, DuplicateVectorIsRejected) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  write_frame(dir / "frames" / "a.png");
  write_frame(dir / "frames" / "b.png");
  write_json_file(dir / "meta.json", json::array({frame("a.png", "dark"), frame("b.png", "dark")}));
  try {
    ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos);
  }
}

TEST(IngestSprites, ListsEveryOffendingRecord) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  write_frame(dir / "frames" / "ok.png");
  json incomplete = frame("ok.png", "light");
  incomplete["properties"].erase("hair");
  write_json_file(dir / "meta.json", json::array({incomplete, frame("missing.png", "dark")}));
  try {
    ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ok.png"), std::string::npos);
    EXPECT_NE(msg.find("missing.png"), std::string::npos);
  }
}

TEST(IngestSprites, OutOfDomainValueWithExplicitSchema) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  write_frame(dir / "frames" / "a.png");
  json meta{{"schema", default_schema()}, {"frames", json::array({frame("a.png", "zombie")})}};
  write_json_file(dir / "meta.json", meta);
  EXPECT_THROW(ingest_sprites(dir / "frames", dir / "meta.json", dir / "out"), SchemaError);
}

TEST(IngestSprites, SheetCellsAndRowProperty) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  Image sheet(64, 96, {255, 255, 255});
  for (int y = 32; y < 64; ++y)
    for (int x = 32; x < 64; ++x) sheet.set(x, y, {0, 0, 255});
  write_png(dir / "frames" / "sheet.png", sheet);
  json f1 = frame("sheet.png", "light");
  f1["properties"].erase("stance");
  f1["cell"] = {{"row", 1}, {"col", 1}};
  json f2 = frame("sheet.png", "dark");
  f2["properties"].erase("stance");
  f2["cell"] = {{"row", 0}, {"col", 0}};
  json meta{{"schema", default_schema()},
            {"sheet",
             {{"cell_width", 32}, {"cell_height", 32}, {"row_property", "stance"},
              {"row_values", {"walk", "slash", "spellcast"}}}},
            {"frames", {f1, f2}}};
  write_json_file(dir / "meta.json", meta);
  const auto r = ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
  ASSERT_EQ(r.manifest.records.size(), 2u);
  EXPECT_EQ(r.manifest.records[0].properties.at("stance"), "slash");
  EXPECT_EQ(r.manifest.records[1].properties.at("stance"), "walk");
  const Image blue = read_png(r.manifest.image_path(r.manifest.records[0]));
  EXPECT_EQ(blue.at(56, 56), (Rgb{0, 0, 255}));
}

TEST(IngestSprites, OutputIndistinguishableFromShapes) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "frames");
  json list = json::array();
  int i = 0;
  for (const char* body : {"light", "tanned", "dark", "darkelf"})
    for (const char* hair : {"blonde", "brown", "black", "red"}) {
      const std::string f = "f" + std::to_string(i++) + ".png";
      write_frame(dir / "frames" / f, 40 + i, 50);
      list.push_back(frame(f, body, hair));
    }
  write_json_file(dir / "meta.json", list);
  const auto r = ingest_sprites(dir / "frames", dir / "meta.json", dir / "out");
  const auto reloaded = load_manifest(dir / "out" / "manifest.json");
  EXPECT_EQ(reloaded, r.manifest);
  EXPECT_NO_THROW(validate_manifest(reloaded, true, 112));
  EXPECT_EQ(nlohmann::json(manifest_to_json(reloaded))["format"], kManifestFormat);
}

}  // namespace
}  // namespace aspectfsl::sprites
