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

#include <gtest/gtest.h>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/manifest.hpp"
#include "test_support.hpp"

namespace aspectfsl {
namespace {

TEST(Manifest, JsonRoundTrip) {
  const auto m = testing::synthetic_manifest();
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
}

TEST(Manifest, DuplicateIdRejected) {
  auto m = testing::synthetic_manifest();
  m.records[1].sample_id = m.records[0].sample_id;
  EXPECT_THROW(validate_manifest(m), SchemaError);
}

TEST(Manifest, DuplicateVectorRejected) {
  auto m = testing::synthetic_manifest();
  m.records[1].properties = m.records[0].properties;
  EXPECT_THROW(validate_manifest(m), SchemaError);
}

TEST(Manifest, IncompleteVectorRejected) {
  auto m = testing::synthetic_manifest();
  m.records[3].properties.values.erase("color");
  EXPECT_THROW(validate_manifest(m), SchemaError);
}

TEST(Manifest, MissingImageRejectedWhenChecked) {
  testing::TempDir dir;
  auto m = testing::synthetic_manifest();
  save_manifest(m, dir.path());
  EXPECT_NO_THROW(validate_manifest(m));
  EXPECT_THROW(validate_manifest(m, true), Error);
}

TEST(Manifest, SaveLoadAcceptsFileOrDirectory) {
  testing::TempDir dir;
  auto m = testing::synthetic_manifest();
  const auto file = save_manifest(m, dir.path());
  EXPECT_EQ(load_manifest(file), m);
  EXPECT_EQ(load_manifest(dir.path()), m);
  EXPECT_EQ(load_manifest(dir.path()).root, dir.path());
}

TEST(Manifest, HashTracksContent) {
  auto a = testing::synthetic_manifest();
  auto b = testing::synthetic_manifest();
  EXPECT_EQ(manifest_hash(a), manifest_hash(b));
  b.generator_config["seed"] = 3;
  EXPECT_NE(manifest_hash(a), manifest_hash(b));
}

TEST(Hash, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(to_hex(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(ImageSet, LoadsRenderedImages) {
  const auto& m = testing::rendered_shapes();
  const ImageSet set(m);
  EXPECT_EQ(set.count(), 240u);
  EXPECT_EQ(set.image_size(), 112);
  const auto img = set.image(m.records[5].sample_id);
  ASSERT_EQ(img.size(), 3u * 112 * 112);
  EXPECT_FLOAT_EQ(img[0], 1.0f);
  EXPECT_THROW(set.image("nope"), Error);
}

}  // namespace
}  // namespace aspectfsl
