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

#include "aspectfsl/manifest.hpp"
#include "aspectfsl/properties.hpp"

namespace aspectfsl::sprites {

/// body (object), stance, shirt, pants, hair.
PropertySchema default_schema();

struct IngestOptions {
  int image_size = 112;
};

struct IngestResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

/// Converts pre-rendered frames plus a metadata sidecar into a dataset.
///
/// Metadata is either a JSON list of {"file", "properties"} (schema inferred
/// from the observed values under the default property names) or an object
/// {"schema", "sheet"?, "frames": [...]}. A frame may carry
/// "cell": {"x","y","w","h"} or {"row","col"} to cut it out of a sheet; with
/// "sheet": {"cell_width","cell_height","row_property","row_values"} the row
/// index can also supply a property value (e.g. stance).
///
/// Every offending record is collected before throwing SchemaError/IoError.
IngestResult ingest_sprites(const std::filesystem::path& frames_dir,
                            const std::filesystem::path& metadata,
                            const std::filesystem::path& out_dir, const IngestOptions& options = {});

}  // namespace aspectfsl::sprites
