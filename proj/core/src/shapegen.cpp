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

#include "aspectfsl/shapegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "aspectfsl/error.hpp"

namespace aspectfsl::shapes {

namespace {

const std::map<std::string, int>& sides_table() {
  static const std::map<std::string, int> t{{"triangle", 3}, {"square", 4}, {"pentagon", 5},
                                            {"hexagon", 6},  {"heptagon", 7}, {"octagon", 8}};
  return t;
}

const std::map<std::string, Rgb>& color_table() {
  static const std::map<std::string, Rgb> t{
      {"red", {215, 40, 40}},     {"green", {40, 165, 60}},  {"blue", {40, 80, 215}},
      {"yellow", {225, 195, 25}}, {"purple", {135, 55, 180}}, {"orange", {240, 130, 20}},
      {"cyan", {30, 190, 200}}};
  return t;
}

const std::map<std::string, int>& thickness_table() {
  static const std::map<std::string, int> t{{"thin", 3}, {"medium", 7}, {"thick", 12}};
  return t;
}

const std::vector<std::string>& pattern_names() {
  static const std::vector<std::string> p{"solid", "stripes", "dots", "checker"};
  return p;
}

template <typename Map>
std::vector<std::string> keys_in_order(const Map& m, std::initializer_list<const char*> order) {
  std::vector<std::string> out;
  for (const char* k : order)
    if (m.count(k)) out.emplace_back(k);
  return out;
}

bool pattern_on(const std::string& pattern, int x, int y) {
  if (pattern == "solid") return true;
  if (pattern == "stripes") return ((x + y) / 4) % 2 == 0;
  if (pattern == "dots") {
    const int dx = x % 8 - 4, dy = y % 8 - 4;
    return dx * dx + dy * dy <= 5;
  }
  if (pattern == "checker") return ((x / 6) + (y / 6)) % 2 == 0;
  throw SchemaError("unknown pattern '" + pattern + "'");
}

Rgb shade(Rgb c, double f) {
  auto s = [f](std::uint8_t v) { return static_cast<std::uint8_t>(std::lround(v * f)); };
  return {s(c.r), s(c.g), s(c.b)};
}

Rgb tint(Rgb c, double f) {
  auto t = [f](std::uint8_t v) { return static_cast<std::uint8_t>(std::lround(v + (255 - v) * f)); };
  return {t(c.r), t(c.g), t(c.b)};
}

/// Regular convex polygon with one vertex pointing up.
class Polygon {
 public:
  Polygon(int sides, double cx, double cy, double radius) {
    for (int k = 0; k < sides; ++k) {
      const double a = -std::numbers::pi / 2 + 2 * std::numbers::pi * k / sides;
      vx_.push_back(cx + radius * std::cos(a));
      vy_.push_back(cy + radius * std::sin(a));
    }
  }

  /// Exact Euclidean signed distance; negative inside.
  double signed_distance(double px, double py) const {
    const std::size_t n = vx_.size();
    double inside_max = -1e300;
    double outside_min = 1e300;
    bool inside = true;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = (k + 1) % n;
      const double ex = vx_[j] - vx_[k], ey = vy_[j] - vy_[k];
      const double len = std::hypot(ex, ey);
      // Outward normal for clockwise-in-screen (counterclockwise-in-math) winding.
      const double nx = ey / len, ny = -ex / len;
      const double side = (px - vx_[k]) * nx + (py - vy_[k]) * ny;
      if (side > 0) inside = false;
      inside_max = std::max(inside_max, side);
      const double t = std::clamp(((px - vx_[k]) * ex + (py - vy_[k]) * ey) / (len * len), 0.0, 1.0);
      outside_min = std::min(outside_min, std::hypot(px - (vx_[k] + t * ex), py - (vy_[k] + t * ey)));
    }
    return inside ? inside_max : outside_min;
  }

 private:
  std::vector<double> vx_, vy_;
};

}  // namespace

PropertySchema default_schema() {
  return PropertySchema("geometric_shapes",
                        {{"shape", {"triangle", "square", "pentagon", "hexagon"}},
                         {"color", {"red", "green", "blue", "yellow", "purple"}},
                         {"thickness", {"thin", "medium", "thick"}},
                         {"pattern", {"solid", "stripes", "dots", "checker"}}},
                        "shape");
}

PropertySchema renderer_vocabulary() {
  return PropertySchema(
      "geometric_shapes_vocabulary",
      {{"shape", keys_in_order(sides_table(), {"triangle", "square", "pentagon", "hexagon", "heptagon", "octagon"})},
       {"color", keys_in_order(color_table(), {"red", "green", "blue", "yellow", "purple", "orange", "cyan"})},
       {"thickness", {"thin", "medium", "thick"}},
       {"pattern", pattern_names()}},
      "shape");
}

ShapeRenderSpec ShapeRenderSpec::from_vector(const PropertyVector& v, std::uint64_t seed) {
  return {v.at("shape"), v.at("color"), v.at("thickness"), v.at("pattern"), kImageSize, seed};
}

int polygon_sides(const std::string& shape) {
  auto it = sides_table().find(shape);
  if (it == sides_table().end()) throw SchemaError("unknown shape '" + shape + "'");
  return it->second;
}

Rgb color_rgb(const std::string& color) {
  auto it = color_table().find(color);
  if (it == color_table().end()) throw SchemaError("unknown color '" + color + "'");
  return it->second;
}

int thickness_px(const std::string& thickness) {
  auto it = thickness_table().find(thickness);
  if (it == thickness_table().end()) throw SchemaError("unknown thickness '" + thickness + "'");
  return it->second;
}

Image render_shape(const ShapeRenderSpec& spec) {
  if (spec.image_size != kImageSize)
    throw SchemaError("image_size must be " + std::to_string(kImageSize));
  const int sides = polygon_sides(spec.shape);
  const Rgb base = color_rgb(spec.color);
  const double outline = thickness_px(spec.thickness);
  if (std::find(pattern_names().begin(), pattern_names().end(), spec.pattern) == pattern_names().end())
    throw SchemaError("unknown pattern '" + spec.pattern + "'");

  const double c = spec.image_size / 2.0;
  const double outer_r = spec.image_size * (40.0 / 112.0);
  const Polygon outer(sides, c, c, outer_r);
  const Polygon hole(sides, c, c, 0.4 * outer_r);
  const Rgb edge = shade(base, 0.55);
  const Rgb light = tint(base, 0.6);

  Image img(spec.image_size, spec.image_size, kBackground);
  for (int y = 0; y < spec.image_size; ++y) {
    for (int x = 0; x < spec.image_size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double d_out = outer.signed_distance(px, py);
      if (d_out >= 0) {
        if (d_out < outline) img.set(x, y, edge);
      } else if (hole.signed_distance(px, py) > 0) {
        img.set(x, y, pattern_on(spec.pattern, x, y) ? base : light);
      }
    }
  }
  return img;
}

namespace {

std::vector<std::size_t> radices(const PropertySchema& schema) {
  std::vector<std::size_t> r;
  for (const auto& p : schema.properties()) r.push_back(p.domain.size());
  return r;
}

std::vector<int> combo_codes(std::size_t ordinal, const std::vector<std::size_t>& radix) {
  std::vector<int> codes(radix.size());
  for (std::size_t i = radix.size(); i-- > 0;) {
    codes[i] = static_cast<int>(ordinal % radix[i]);
    ordinal /= radix[i];
  }
  return codes;
}

std::size_t combo_ordinal(std::span<const int> codes, const std::vector<std::size_t>& radix) {
  std::size_t o = 0;
  for (std::size_t i = 0; i < radix.size(); ++i) o = o * radix[i] + static_cast<std::size_t>(codes[i]);
  return o;
}

void check_renderable(const PropertySchema& schema) {
  const PropertySchema vocab = renderer_vocabulary();
  if (schema.size() != vocab.size() || schema.object_property() != "shape")
    throw SchemaError("shape datasets need exactly the properties shape/color/thickness/pattern with "
                      "shape as the object property");
  for (const auto& p : schema.properties()) {
    const auto& allowed = vocab.property(p.name).domain;
    for (const auto& v : p.domain)
      if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
        throw SchemaError("renderer does not know " + p.name + " '" + v + "'");
  }
}

}  // namespace

DatasetManifest build_dataset(const PropertySchema& schema, const std::filesystem::path& out_dir,
                              const ComboSelection& selection) {
  check_renderable(schema);
  const auto radix = radices(schema);
  const std::size_t total = schema.combination_count();

  std::vector<std::size_t> ordinals;
  nlohmann::json selection_json;
  switch (selection.mode) {
    case ComboSelection::Mode::kAll:
      ordinals.resize(total);
      for (std::size_t i = 0; i < total; ++i) ordinals[i] = i;
      selection_json = {{"mode", "all"}};
      break;
    case ComboSelection::Mode::kSampled: {
      if (selection.k == 0) throw SchemaError("sampled selection needs k >= 1");
      if (selection.k > total)
        throw SchemaError("requested " + std::to_string(selection.k) + " distinct combinations but the schema has " +
                          std::to_string(total) + "; duplicates would be required");
      std::vector<std::size_t> pool(total);
      for (std::size_t i = 0; i < total; ++i) pool[i] = i;
      std::mt19937_64 rng(selection.seed);
      for (std::size_t i = 0; i < selection.k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      ordinals.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(selection.k));
      std::sort(ordinals.begin(), ordinals.end());
      selection_json = {{"mode", "sampled"}, {"k", selection.k}, {"seed", selection.seed}};
      break;
    }
    case ComboSelection::Mode::kExplicit: {
      std::set<std::size_t> seen;
      for (const auto& v : selection.combos) {
        const auto o = combo_ordinal(encode(schema, v), radix);
        if (!seen.insert(o).second) throw SchemaError("duplicate combination requested");
        ordinals.push_back(o);
      }
      selection_json = {{"mode", "explicit"}, {"count", ordinals.size()}};
      break;
    }
  }

  const std::uint64_t seed = selection.mode == ComboSelection::Mode::kSampled ? selection.seed : 0;
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.schema = schema;
  manifest.generator_config = {{"generator", "shapegen"},
                               {"image_size", kImageSize},
                               {"selection", selection_json},
                               {"seed", seed},
                               {"combinations_total", total}};
  for (std::size_t o : ordinals) {
    const auto codes = combo_codes(o, radix);
    PropertyVector v = decode(schema, codes);
    char id[32];
    std::snprintf(id, sizeof id, "shape_%05zu", o);
    const std::string rel = std::string("images/") + id + ".png";
    write_png(out_dir / rel, render_shape(ShapeRenderSpec::from_vector(v, seed)));
    manifest.records.push_back({id, rel, std::move(v)});
  }
  save_manifest(manifest, out_dir);
  return manifest;
}

}  // namespace aspectfsl::shapes
