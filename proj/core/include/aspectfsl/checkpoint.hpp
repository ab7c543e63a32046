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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/nn/layers.hpp"

namespace aspectfsl {

/// Binary layout: "AFSLCKPT", u32 version, u64 length + JSON metadata,
/// u64 array count, then per array u32 name length, name, 4×i32 extents,
/// float64 data. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  nn::Shape4 shape;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<NamedArray> export_arrays(const std::vector<nn::ParamRef<T>>& refs);

/// Copies every array named in `refs` out of `checkpoint`. Throws
/// ShapeError when one is missing or has different extents.
template <typename T>
void import_arrays(const Checkpoint& checkpoint, const std::vector<nn::ParamRef<T>>& refs);

}  // namespace aspectfsl
