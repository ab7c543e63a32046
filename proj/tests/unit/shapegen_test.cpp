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

#include <set>

#include <gtest/gtest.h>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/image.hpp"
#include "aspectfsl/shapegen.hpp"
#include "test_support.hpp"

namespace aspectfsl::shapes {
namespace {

constexpr Rgb kWhite{255, 255, 255};

ShapeRenderSpec spec(const std::string& shape, const std::string& color, const std::string& thickness,
                     const std::string& pattern) {
  ShapeRenderSpec s;
  s.shape = shape;
  s.color = color;
  s.thickness = thickness;
  s.pattern = pattern;
  return s;
}

int foreground_count(const Image& img) {
  int n = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) n += img.at(x, y) != kWhite;
  return n;
}

TEST(RenderShape, Deterministic) {
  const auto s = spec("pentagon", "green", "medium", "dots");
  EXPECT_EQ(render_shape(s), render_shape(s));
}

TEST(RenderShape, SizeIs112) {
  const Image img = render_shape(spec("triangle", "red", "thin", "solid"));
  EXPECT_EQ(img.width(), 112);
  EXPECT_EQ(img.height(), 112);
}

TEST(RenderShape, ColorChangeTouchesForegroundOnly) {
  const Image a = render_shape(spec("square", "red", "medium", "stripes"));
  const Image b = render_shape(spec("square", "blue", "medium", "stripes"));
  int changed = 0;
  for (int y = 0; y < 112; ++y)
    for (int x = 0; x < 112; ++x) {
      const bool bg_a = a.at(x, y) == kWhite;
      const bool bg_b = b.at(x, y) == kWhite;
      ASSERT_EQ(bg_a, bg_b) << "at " << x << "," << y;
      if (bg_a) continue;
      changed += a.at(x, y) != b.at(x, y);
    }
  EXPECT_EQ(changed, foreground_count(a));
}

TEST(RenderShape, ThickerOutlineCoversMorePixels) {
  for (const char* shape : {"triangle", "square", "pentagon", "hexagon"}) {
    const int thin = foreground_count(render_shape(spec(shape, "yellow", "thin", "solid")));
    const int medium = foreground_count(render_shape(spec(shape, "yellow", "medium", "solid")));
    const int thick = foreground_count(render_shape(spec(shape, "yellow", "thick", "solid")));
    EXPECT_LT(thin, medium) << shape;
    EXPECT_LT(medium, thick) << shape;
  }
}

TEST(RenderShape, HoleShowsBackground) {
  const Image img = render_shape(spec("hexagon", "purple", "thick", "checker"));
  EXPECT_EQ(img.at(56, 56), kWhite);
  EXPECT_EQ(img.at(0, 0), kWhite);
}

TEST(RenderShape, UnknownValueThrows) {
  EXPECT_THROW(render_shape(spec("circle", "red", "thin", "solid")), Error);
  EXPECT_THROW(render_shape(spec("square", "magenta", "thin", "solid")), Error);
  EXPECT_THROW(render_shape(spec("square", "red", "hairline", "solid")), Error);
  EXPECT_THROW(render_shape(spec("square", "red", "thin", "plaid")), Error);
}

TEST(RenderShape, RendererVocabularyExtendsDefaults) {
  EXPECT_EQ(polygon_sides("octagon"), 8);
  EXPECT_NO_THROW(render_shape(spec("heptagon", "orange", "thin", "solid")));
}

TEST(BuildDataset, AllCombinationsAreDistinctImages) {
  const auto& m = testing::rendered_shapes();
  ASSERT_EQ(m.records.size(), 240u);
  std::set<std::string> hashes;
  for (const auto& r : m.records) {
    const Image img = read_png(m.image_path(r));
    ASSERT_EQ(img.width(), 112);
    ASSERT_EQ(img.height(), 112);
    hashes.insert(hash_file(m.image_path(r)));
  }
  EXPECT_EQ(hashes.size(), 240u);
  EXPECT_NO_THROW(validate_manifest(m, true, 112));
}

TEST(BuildDataset, SampledIsDeterministic) {
  testing::TempDir a, b;
  const auto ma = build_dataset(default_schema(), a.path(), ComboSelection::sampled(50, 7));
  const auto mb = build_dataset(default_schema(), b.path(), ComboSelection::sampled(50, 7));
  EXPECT_EQ(ma.records.size(), 50u);
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(hash_file(a / "manifest.json"), hash_file(b / "manifest.json"));
}

TEST(BuildDataset, ManifestReloadRoundTrips) {
  testing::TempDir dir;
  const auto m = build_dataset(default_schema(), dir.path(), ComboSelection::sampled(12, 1));
  EXPECT_EQ(load_manifest(dir.path()), m);
}

TEST(BuildDataset, OversampledSelectionThrows) {
  testing::TempDir dir;
  EXPECT_THROW(build_dataset(default_schema(), dir.path(), ComboSelection::sampled(241, 1)), SchemaError);
}

TEST(BuildDataset, DuplicateExplicitComboThrows) {
  testing::TempDir dir;
  const auto v = testing::shape_vec("square", "red", "thin", "dots");
  EXPECT_THROW(build_dataset(default_schema(), dir.path(), ComboSelection::explicit_list({v, v})), SchemaError);
}

TEST(BuildDataset, SmallSchemaIsPixelInjective) {
  const PropertySchema small("mini",
                             {{"shape", {"triangle", "square"}},
                              {"color", {"red", "blue"}},
                              {"thickness", {"thin", "thick"}},
                              {"pattern", {"solid", "dots"}}},
                             "shape");
  testing::TempDir dir;
  const auto m = build_dataset(small, dir.path());
  std::set<std::vector<std::uint8_t>> seen;
  for (const auto& r : m.records) seen.insert(read_png(m.image_path(r)).bytes());
  EXPECT_EQ(seen.size(), 16u);
}

}  // namespace
}  // namespace aspectfsl::shapes
