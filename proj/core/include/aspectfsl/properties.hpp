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

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace aspectfsl {

/// A (property name, value) pair. Aspects are sets of these.
using PropertyPair = std::pair<std::string, std::string>;
using PairSet = std::set<PropertyPair>;

struct Property {
  std::string name;
  std::vector<std::string> domain;

  bool operator==(const Property&) const = default;
};

/// Ordered list of categorical properties, one of which names the object type.
class PropertySchema {
 public:
  PropertySchema() = default;
  /// Throws SchemaError on duplicate names, domains with fewer than two
  /// (or repeated) values, or an object property that is not in the list.
  PropertySchema(std::string name, std::vector<Property> properties, std::string object_property);

  const std::string& name() const { return name_; }
  const std::vector<Property>& properties() const { return properties_; }
  const std::string& object_property() const { return object_property_; }
  std::size_t size() const { return properties_.size(); }
  std::size_t object_index() const { return object_index_; }

  std::size_t index_of(const std::string& property) const;
  bool contains(const std::string& property) const;
  const Property& property(const std::string& name) const { return properties_[index_of(name)]; }
  /// Index of `value` in the domain of property `property_index`.
  std::size_t value_index(std::size_t property_index, const std::string& value) const;
  /// Product of all domain sizes.
  std::size_t combination_count() const;

  bool operator==(const PropertySchema& other) const {
    return name_ == other.name_ && properties_ == other.properties_ &&
           object_property_ == other.object_property_;
  }

 private:
  std::string name_;
  std::vector<Property> properties_;
  std::string object_property_;
  std::size_t object_index_ = 0;
};

void to_json(nlohmann::json& j, const PropertySchema& schema);
void from_json(const nlohmann::json& j, PropertySchema& schema);

/// Complete assignment of values to a schema's properties.
struct PropertyVector {
  std::string schema;
  std::map<std::string, std::string> values;

  const std::string& at(const std::string& property) const;
  bool operator==(const PropertyVector&) const = default;
  auto operator<=>(const PropertyVector&) const = default;
};

void to_json(nlohmann::json& j, const PropertyVector& v);
void from_json(const nlohmann::json& j, PropertyVector& v);

/// Throws SchemaError unless `v` assigns one in-domain value to every property.
void validate_vector(const PropertySchema& schema, const PropertyVector& v);

/// Domain indices in schema order. Validates first.
std::vector<int> encode(const PropertySchema& schema, const PropertyVector& v);
PropertyVector decode(const PropertySchema& schema, std::span<const int> codes);

/// The (name, value) pairs on which `a` and `b` agree.
PairSet shared_pairs(const PropertyVector& a, const PropertyVector& b);

struct AspectMatch {
  std::optional<std::size_t> matched_index;
  PairSet witness;

  bool operator==(const AspectMatch&) const = default;
};

/// Brute-force aspect matcher. The witness collects every pair the query
/// shares with exactly one support element; a match exists iff all those
/// pairs point at the same element.
AspectMatch aspect_oracle(const PropertyVector& query, std::span<const PropertyVector> support);

struct EpisodeDiagnostics {
  bool object_disjoint = false;
  bool single_discriminating = false;
  std::optional<std::string> discriminating_property;
  AspectMatch oracle;
  bool passed = false;
  std::vector<std::string> issues;
};

/// Checks the support-set constraints for one episode. Never throws on
/// malformed input; problems are listed in `issues`.
EpisodeDiagnostics validate_episode_semantics(const PropertySchema& schema,
                                              const PropertyVector& query,
                                              std::span<const PropertyVector> support);

}  // namespace aspectfsl
