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

#include "aspectfsl/properties.hpp"

#include <algorithm>
#include <numeric>

#include "aspectfsl/error.hpp"

namespace aspectfsl {

PropertySchema::PropertySchema(std::string name, std::vector<Property> properties,
                               std::string object_property)
    : name_(std::move(name)),
      properties_(std::move(properties)),
      object_property_(std::move(object_property)) {
  if (properties_.empty()) throw SchemaError("schema '" + name_ + "' has no properties");
  std::set<std::string> seen;
  for (const auto& p : properties_) {
    if (p.name.empty()) throw SchemaError("empty property name in schema '" + name_ + "'");
    if (!seen.insert(p.name).second) throw SchemaError("duplicate property '" + p.name + "'");
    if (p.domain.size() < 2)
      throw SchemaError("property '" + p.name + "' needs at least 2 values");
    std::set<std::string> values(p.domain.begin(), p.domain.end());
    if (values.size() != p.domain.size())
      throw SchemaError("property '" + p.name + "' has repeated domain values");
  }
  auto it = std::find_if(properties_.begin(), properties_.end(),
                         [&](const Property& p) { return p.name == object_property_; });
  if (it == properties_.end())
    throw SchemaError("object property '" + object_property_ + "' is not a schema property");
  object_index_ = static_cast<std::size_t>(it - properties_.begin());
}

std::size_t PropertySchema::index_of(const std::string& property) const {
  for (std::size_t i = 0; i < properties_.size(); ++i)
    if (properties_[i].name == property) return i;
  throw SchemaError("unknown property '" + property + "' in schema '" + name_ + "'");
}

bool PropertySchema::contains(const std::string& property) const {
  return std::any_of(properties_.begin(), properties_.end(),
                     [&](const Property& p) { return p.name == property; });
}

std::size_t PropertySchema::value_index(std::size_t property_index, const std::string& value) const {
  const auto& domain = properties_.at(property_index).domain;
  auto it = std::find(domain.begin(), domain.end(), value);
  if (it == domain.end())
    throw SchemaError("value '" + value + "' not in domain of '" +
                      properties_[property_index].name + "'");
  return static_cast<std::size_t>(it - domain.begin());
}

std::size_t PropertySchema::combination_count() const {
  return std::accumulate(properties_.begin(), properties_.end(), std::size_t{1},
                         [](std::size_t acc, const Property& p) { return acc * p.domain.size(); });
}

void to_json(nlohmann::json& j, const PropertySchema& schema) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : schema.properties()) props.push_back({{"name", p.name}, {"domain", p.domain}});
  j = {{"name", schema.name()}, {"object_property", schema.object_property()}, {"properties", props}};
}

void from_json(const nlohmann::json& j, PropertySchema& schema) {
  try {
    std::vector<Property> props;
    for (const auto& p : j.at("properties"))
      props.push_back({p.at("name").get<std::string>(), p.at("domain").get<std::vector<std::string>>()});
    schema = PropertySchema(j.at("name").get<std::string>(), std::move(props),
                            j.at("object_property").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema JSON: ") + e.what());
  }
}

const std::string& PropertyVector::at(const std::string& property) const {
  auto it = values.find(property);
  if (it == values.end()) throw SchemaError("vector has no value for '" + property + "'");
  return it->second;
}

void to_json(nlohmann::json& j, const PropertyVector& v) {
  j = {{"schema", v.schema}, {"values", v.values}};
}

void from_json(const nlohmann::json& j, PropertyVector& v) {
  v.schema = j.at("schema").get<std::string>();
  v.values = j.at("values").get<std::map<std::string, std::string>>();
}

void validate_vector(const PropertySchema& schema, const PropertyVector& v) {
  if (v.schema != schema.name())
    throw SchemaError("vector belongs to schema '" + v.schema + "', expected '" + schema.name() + "'");
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& p = schema.properties()[i];
    auto it = v.values.find(p.name);
    if (it == v.values.end()) throw SchemaError("missing value for property '" + p.name + "'");
    schema.value_index(i, it->second);
  }
  if (v.values.size() != schema.size()) {
    for (const auto& [name, value] : v.values)
      if (!schema.contains(name)) throw SchemaError("unknown property '" + name + "'");
  }
}

std::vector<int> encode(const PropertySchema& schema, const PropertyVector& v) {
  validate_vector(schema, v);
  std::vector<int> codes(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i)
    codes[i] = static_cast<int>(schema.value_index(i, v.values.at(schema.properties()[i].name)));
  return codes;
}

PropertyVector decode(const PropertySchema& schema, std::span<const int> codes) {
  if (codes.size() != schema.size()) throw SchemaError("code vector has wrong length");
  PropertyVector v{schema.name(), {}};
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& p = schema.properties()[i];
    v.values[p.name] = p.domain.at(static_cast<std::size_t>(codes[i]));
  }
  return v;
}

namespace {

bool same_schema(const PropertyVector& a, const PropertyVector& b) {
  if (a.schema != b.schema || a.values.size() != b.values.size()) return false;
  return std::equal(a.values.begin(), a.values.end(), b.values.begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; });
}

}  // namespace

PairSet shared_pairs(const PropertyVector& a, const PropertyVector& b) {
  if (!same_schema(a, b)) throw SchemaError("shared_pairs: vectors do not share a schema");
  PairSet out;
  auto ib = b.values.begin();
  for (const auto& [name, value] : a.values) {
    if (ib->second == value) out.emplace(name, value);
    ++ib;
  }
  return out;
}

AspectMatch aspect_oracle(const PropertyVector& query, std::span<const PropertyVector> support) {
  std::map<PropertyPair, std::vector<std::size_t>> owners;
  for (std::size_t i = 0; i < support.size(); ++i)
    for (auto& pair : shared_pairs(query, support[i])) owners[pair].push_back(i);

  AspectMatch match;
  std::set<std::size_t> targets;
  for (const auto& [pair, elements] : owners) {
    if (elements.size() == 1) {
      match.witness.insert(pair);
      targets.insert(elements.front());
    }
  }
  if (targets.size() == 1) match.matched_index = *targets.begin();
  return match;
}

EpisodeDiagnostics validate_episode_semantics(const PropertySchema& schema,
                                              const PropertyVector& query,
                                              std::span<const PropertyVector> support) {
  EpisodeDiagnostics d;
  try {
    validate_vector(schema, query);
    for (const auto& s : support) validate_vector(schema, s);
  } catch (const SchemaError& e) {
    d.issues.emplace_back(e.what());
    return d;
  }
  if (support.size() < 2) {
    d.issues.emplace_back("support set needs at least 2 elements");
    return d;
  }

  const std::string& object = schema.object_property();
  d.object_disjoint = std::none_of(support.begin(), support.end(), [&](const PropertyVector& s) {
    return s.at(object) == query.at(object);
  });
  if (!d.object_disjoint) d.issues.emplace_back("query shares its object type with the support set");

  std::vector<std::string> varying;
  bool distinct = true;
  for (const auto& p : schema.properties()) {
    std::set<std::string> seen;
    for (const auto& s : support) seen.insert(s.at(p.name));
    if (seen.size() > 1) {
      varying.push_back(p.name);
      if (seen.size() != support.size()) distinct = false;
    }
  }
  if (varying.size() == 1 && varying.front() != object && distinct) {
    d.single_discriminating = true;
    d.discriminating_property = varying.front();
  } else if (varying.size() != 1) {
    d.issues.emplace_back("support varies in " + std::to_string(varying.size()) +
                          " properties, expected exactly 1");
  } else if (varying.front() == object) {
    d.issues.emplace_back("the object property cannot be the discriminating property");
  } else {
    d.issues.emplace_back("discriminating property '" + varying.front() +
                          "' repeats a value across the support set");
  }

  d.oracle = aspect_oracle(query, support);
  if (!d.oracle.matched_index) d.issues.emplace_back("aspect oracle finds no unambiguous match");
  d.passed = d.object_disjoint && d.single_discriminating && d.oracle.matched_index.has_value();
  return d;
}

}  // namespace aspectfsl
