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
#include <string_view>

#include <nlohmann/json.hpp>

namespace aspectfsl {

/// 64-bit FNV-1a. Stable across platforms; used to stamp artifacts.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Hash of the canonical (key-sorted, compact) JSON dump, as 16 hex digits.
std::string hash_json(const nlohmann::json& value);

/// Hash of a file's bytes, as 16 hex digits.
std::string hash_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t value);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes `value` with 2-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace aspectfsl
