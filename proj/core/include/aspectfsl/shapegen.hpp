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
#include <string>
#include <vector>

#include "aspectfsl/image.hpp"
#include "aspectfsl/manifest.hpp"
#include "aspectfsl/properties.hpp"

namespace aspectfsl::shapes {

inline constexpr int kImageSize = 112;

/// shape ∈ {triangle, square, pentagon, hexagon}, color ∈ {red, green, blue,
/// yellow, purple}, thickness ∈ {thin, medium, thick}, pattern ∈ {solid,
/// stripes, dots, checker}; shape is the object property.
PropertySchema default_schema();

/// Every value the renderer understands, per property. Custom schemas must
/// use the property names `shape`, `color`, `thickness`, `pattern` and pick
/// their domains from these.
PropertySchema renderer_vocabulary();

struct ShapeRenderSpec {
  std::string shape = "square";
  std::string color = "red";
  std::string thickness = "thin";
  std::string pattern = "solid";
  int image_size = kImageSize;
  /// Recorded with the sample. Geometry is fixed (centered, unrotated), so
  /// the seed does not change pixels.
  std::uint64_t seed = 0;

  static ShapeRenderSpec from_vector(const PropertyVector& v, std::uint64_t seed = 0);
};

int polygon_sides(const std::string& shape);
Rgb color_rgb(const std::string& color);
int thickness_px(const std::string& thickness);

inline constexpr Rgb kBackground{255, 255, 255};

/// Polygon ring centered in the image: dark outline of the spec thickness
/// outside the outer edge, annulus filled with the pattern in the spec color,
/// concentric hole showing the background.
Image render_shape(const ShapeRenderSpec& spec);

struct ComboSelection {
  enum class Mode { kAll, kSampled, kExplicit };
  Mode mode = Mode::kAll;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<PropertyVector> combos;

  static ComboSelection all() { return {}; }
  static ComboSelection sampled(std::size_t k, std::uint64_t seed) { return {Mode::kSampled, k, seed, {}}; }
  static ComboSelection explicit_list(std::vector<PropertyVector> v) {
    return {Mode::kExplicit, 0, 0, std::move(v)};
  }
};

/// Renders one image per selected combination into `out_dir/images/` and
/// writes `out_dir/manifest.json`.
DatasetManifest build_dataset(const PropertySchema& schema, const std::filesystem::path& out_dir,
                              const ComboSelection& selection = ComboSelection::all());

}  // namespace aspectfsl::shapes
