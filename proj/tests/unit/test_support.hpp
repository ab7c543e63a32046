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

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "aspectfsl/manifest.hpp"
#include "aspectfsl/properties.hpp"
#include "aspectfsl/shapegen.hpp"

namespace aspectfsl::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("afsl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline PropertyVector shape_vec(const std::string& shape, const std::string& color, const std::string& thickness,
                                const std::string& pattern) {
  return {"geometric_shapes", {{"shape", shape}, {"color", color}, {"thickness", thickness}, {"pattern", pattern}}};
}

/// Manifest over the full shapes schema without rendering any image.
inline DatasetManifest synthetic_manifest(const PropertySchema& schema = shapes::default_schema()) {
  DatasetManifest m;
  m.schema = schema;
  std::vector<int> codes(schema.size(), 0);
  for (std::size_t o = 0; o < schema.combination_count(); ++o) {
    std::size_t rest = o;
    for (std::size_t p = schema.size(); p-- > 0;) {
      const std::size_t radix = schema.properties()[p].domain.size();
      codes[p] = static_cast<int>(rest % radix);
      rest /= radix;
    }
    const std::string id = "s" + std::to_string(o);
    m.records.push_back({id, "images/" + id + ".png", decode(schema, codes)});
  }
  return m;
}

/// Full shapes dataset rendered once per test binary.
inline const DatasetManifest& rendered_shapes() {
  static TempDir dir;
  static DatasetManifest m = shapes::build_dataset(shapes::default_schema(), dir.path() / "shapes");
  return m;
}

}  // namespace aspectfsl::testing
