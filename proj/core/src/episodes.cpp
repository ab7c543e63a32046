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

#include "aspectfsl/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"

namespace aspectfsl {

namespace {

constexpr const char* kEpisodeFormat = "aspectfsl.episodes/1";
constexpr std::array<const char*, 3> kTagNames{"train", "val", "test"};

template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  // Explicit Fisher-Yates so file contents do not depend on the standard
  // library's shuffle implementation.
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

/// Is there any 2-way episode with a query from `queries` and supports from `supports`?
bool has_feasible_episode(const PropertySchema& schema,
                          const std::unordered_map<std::string, std::vector<int>>& codes,
                          const std::vector<std::string>& queries, const std::vector<std::string>& supports) {
  const std::size_t obj = schema.object_index();
  for (std::size_t a = 0; a < schema.size(); ++a) {
    if (a == obj) continue;
    // Supports grouped by every value except the aspect property.
    std::map<std::vector<int>, std::set<int>> groups;
    for (const auto& id : supports) {
      std::vector<int> key = codes.at(id);
      const int aspect_value = key[a];
      key[a] = -1;
      groups[key].insert(aspect_value);
    }
    for (const auto& q : queries) {
      const auto& qc = codes.at(q);
      for (const auto& [key, values] : groups)
        if (key[obj] != qc[obj] && values.size() >= 2 && values.count(qc[a])) return true;
    }
  }
  return false;
}

}  // namespace

std::string to_string(SplitMode mode) { return mode == SplitMode::kUnique ? "unique" : "query"; }
std::string to_string(SplitTag tag) { return kTagNames[static_cast<int>(tag)]; }

SplitMode parse_split_mode(const std::string& s) {
  if (s == "unique") return SplitMode::kUnique;
  if (s == "query" || s == "aspect") return SplitMode::kQuery;
  throw Error("unknown split mode '" + s + "' (expected unique|query)");
}

SplitTag parse_split_tag(const std::string& s) {
  for (int i = 0; i < 3; ++i)
    if (s == kTagNames[i]) return static_cast<SplitTag>(i);
  throw Error("unknown split tag '" + s + "' (expected train|val|test)");
}

nlohmann::json plan_to_json(const SplitPlan& plan) {
  nlohmann::json j{{"mode", to_string(plan.mode)},
                   {"seed", plan.seed},
                   {"fractions", {{"train", plan.fractions.train}, {"val", plan.fractions.val}, {"test", plan.fractions.test}}}};
  for (int t = 0; t < 3; ++t) j["query_pools"][kTagNames[t]] = plan.query_pools[t];
  // Query mode supports are the full dataset for every split; store once.
  if (plan.mode == SplitMode::kQuery) j["support_pool"] = plan.support_pools[0];
  return j;
}

SplitPlan plan_from_json(const nlohmann::json& j) {
  SplitPlan p;
  p.mode = parse_split_mode(j.at("mode").get<std::string>());
  p.seed = j.at("seed").get<std::uint64_t>();
  const auto& f = j.at("fractions");
  p.fractions = {f.at("train").get<double>(), f.at("val").get<double>(), f.at("test").get<double>()};
  for (int t = 0; t < 3; ++t) {
    p.query_pools[t] = j.at("query_pools").at(kTagNames[t]).get<std::vector<std::string>>();
    p.support_pools[t] = p.mode == SplitMode::kUnique ? p.query_pools[t]
                                                      : j.at("support_pool").get<std::vector<std::string>>();
  }
  return p;
}

SplitPlan make_split(const DatasetManifest& manifest, SplitMode mode, SplitFractions fractions,
                     std::uint64_t seed) {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.val < 0 || fractions.test < 0)
    throw Error("split fractions must be non-negative and sum to 1");

  std::vector<std::string> ids;
  ids.reserve(manifest.records.size());
  for (const auto& r : manifest.records) ids.push_back(r.sample_id);
  std::mt19937_64 rng(seed);
  shuffle_in_place(ids, rng);

  const std::size_t n = ids.size();
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(fractions.test * n + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  SplitPlan plan;
  plan.mode = mode;
  plan.fractions = fractions;
  plan.seed = seed;
  auto begin = ids.begin();
  plan.query_pools[0].assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  plan.query_pools[1].assign(begin + static_cast<std::ptrdiff_t>(n_train),
                             begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  plan.query_pools[2].assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  for (auto& pool : plan.query_pools) std::sort(pool.begin(), pool.end());

  std::vector<std::string> all;
  for (const auto& r : manifest.records) all.push_back(r.sample_id);
  std::sort(all.begin(), all.end());
  for (int t = 0; t < 3; ++t) plan.support_pools[t] = mode == SplitMode::kUnique ? plan.query_pools[t] : all;

  std::unordered_map<std::string, std::vector<int>> codes;
  for (const auto& r : manifest.records) codes.emplace(r.sample_id, encode(manifest.schema, r.properties));
  const double fr[3] = {fractions.train, fractions.val, fractions.test};
  for (int t = 0; t < 3; ++t) {
    if (fr[t] <= 0) continue;
    if (!has_feasible_episode(manifest.schema, codes, plan.query_pools[t], plan.support_pools[t]))
      throw InfeasibleError("dataset too small: the " + std::string(kTagNames[t]) + " split (" +
                            std::to_string(plan.query_pools[t].size()) +
                            " queries) cannot populate a single episode");
  }
  return plan;
}

nlohmann::json episode_to_json(const Episode& e) {
  return {{"query_id", e.query_id},         {"support_ids", e.support_ids},
          {"aspect_property", e.aspect_property}, {"positive_index", e.positive_index},
          {"shared_count", e.shared_count}, {"split_tag", to_string(e.split)}};
}

Episode episode_from_json(const nlohmann::json& j) {
  return {j.at("query_id").get<std::string>(),       j.at("support_ids").get<std::vector<std::string>>(),
          j.at("aspect_property").get<std::string>(), j.at("positive_index").get<int>(),
          j.at("shared_count").get<int>(),            parse_split_tag(j.at("split_tag").get<std::string>())};
}

EpisodeSampler::EpisodeSampler(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag)
    : schema_(manifest.schema), tag_(tag), queries_(plan.queries(tag)) {
  for (const auto& r : manifest.records) codes_.emplace(r.sample_id, encode(schema_, r.properties));
  for (const auto& id : plan.supports(tag)) {
    auto it = codes_.find(id);
    if (it == codes_.end()) throw Error("split plan references unknown sample '" + id + "'");
    support_lookup_.emplace(ordinal(it->second), id);
  }
  for (const auto& id : queries_)
    if (!codes_.count(id)) throw Error("split plan references unknown sample '" + id + "'");
}

std::size_t EpisodeSampler::ordinal(const std::vector<int>& codes) const {
  std::size_t o = 0;
  for (std::size_t i = 0; i < schema_.size(); ++i)
    o = o * schema_.properties()[i].domain.size() + static_cast<std::size_t>(codes[i]);
  return o;
}

std::vector<std::string> EpisodeSampler::aspect_candidates(int support_size) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (i != schema_.object_index() && schema_.properties()[i].domain.size() >= static_cast<std::size_t>(support_size))
      out.push_back(schema_.properties()[i].name);
  return out;
}

Episode EpisodeSampler::sample(const SampleRequest& req, std::mt19937_64& rng) const {
  const int n = req.support_size;
  if (n < 2) throw InfeasibleError("support size must be at least 2");
  if (queries_.empty()) throw InfeasibleError("no query images in the " + to_string(tag_) + " split");
  if (req.query_id && !codes_.count(*req.query_id))
    throw InfeasibleError("unknown query '" + *req.query_id + "'");

  std::vector<std::size_t> aspects;
  if (req.aspect) {
    const std::size_t a = schema_.index_of(*req.aspect);
    if (a == schema_.object_index())
      throw InfeasibleError("the object property '" + *req.aspect + "' cannot be an aspect");
    if (schema_.properties()[a].domain.size() < static_cast<std::size_t>(n))
      throw InfeasibleError("aspect '" + *req.aspect + "' has fewer than " + std::to_string(n) +
                            " values (single discriminating property needs pairwise distinct values)");
    aspects.push_back(a);
  } else {
    for (const auto& name : aspect_candidates(n)) aspects.push_back(schema_.index_of(name));
    if (aspects.empty())
      throw InfeasibleError("no non-object property has " + std::to_string(n) + " values");
  }
  const int max_s = max_shared_count();
  if (req.shared_count && (*req.shared_count < 0 || *req.shared_count > max_s))
    throw InfeasibleError("shared count " + std::to_string(*req.shared_count) + " outside 0.." +
                          std::to_string(max_s));

  const std::size_t obj = schema_.object_index();
  std::size_t missing_support = 0;
  for (int attempt = 0; attempt < req.max_retries; ++attempt) {
    const std::string& query = req.query_id ? *req.query_id : queries_[uniform_index(rng, queries_.size())];
    const std::vector<int>& qc = codes_.at(query);
    const std::size_t a = aspects[uniform_index(rng, aspects.size())];
    const int s = req.shared_count ? *req.shared_count : static_cast<int>(uniform_index(rng, max_s + 1));

    auto other_value = [&](std::size_t prop) {
      const int size = static_cast<int>(schema_.properties()[prop].domain.size());
      int v = static_cast<int>(uniform_index(rng, size - 1));
      return v >= qc[prop] ? v + 1 : v;
    };

    std::vector<int> common = qc;
    common[obj] = other_value(obj);
    std::vector<std::size_t> rest;
    for (std::size_t p = 0; p < schema_.size(); ++p)
      if (p != obj && p != a) rest.push_back(p);
    shuffle_in_place(rest, rng);
    for (std::size_t k = static_cast<std::size_t>(s); k < rest.size(); ++k) common[rest[k]] = other_value(rest[k]);

    std::vector<int> values(schema_.properties()[a].domain.size());
    for (std::size_t v = 0; v < values.size(); ++v) values[v] = static_cast<int>(v);
    values.erase(values.begin() + qc[a]);
    shuffle_in_place(values, rng);
    values.resize(static_cast<std::size_t>(n - 1));
    const int positive = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    values.insert(values.begin() + positive, qc[a]);

    Episode e{query, {}, schema_.properties()[a].name, positive, s, tag_};
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      std::vector<int> sc = common;
      sc[a] = values[static_cast<std::size_t>(i)];
      auto it = support_lookup_.find(ordinal(sc));
      if (it == support_lookup_.end()) {
        ok = false;
      } else {
        e.support_ids.push_back(it->second);
      }
    }
    if (ok) return e;
    ++missing_support;
  }
  throw InfeasibleError("no valid episode after " + std::to_string(req.max_retries) + " attempts in the " +
                        to_string(tag_) + " split: " + std::to_string(missing_support) +
                        " support sets needed elements that agree on every property except the aspect "
                        "(single discriminating property) but are absent from the support pool");
}

Episode sample_episode(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag,
                       const SampleRequest& request, std::mt19937_64& rng) {
  return EpisodeSampler(manifest, plan, tag).sample(request, rng);
}

std::mt19937_64 episode_rng(std::uint64_t seed, std::uint64_t index, SplitTag tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

nlohmann::json config_to_json(const EpisodeSetConfig& c) {
  nlohmann::json j{{"support_size", c.support_size},
                   {"episodes_per_query", c.episodes_per_query},
                   {"count", c.count},
                   {"max_retries", c.max_retries},
                   {"aspect", nullptr},
                   {"shared_count", nullptr}};
  if (c.aspect) j["aspect"] = *c.aspect;
  if (c.shared_count) j["shared_count"] = *c.shared_count;
  return j;
}

EpisodeSetConfig episode_config_from_json(const nlohmann::json& j) {
  EpisodeSetConfig c;
  c.support_size = j.value("support_size", c.support_size);
  c.episodes_per_query = j.value("episodes_per_query", c.episodes_per_query);
  c.count = j.value("count", c.count);
  c.max_retries = j.value("max_retries", c.max_retries);
  if (j.contains("aspect") && !j["aspect"].is_null()) c.aspect = j["aspect"].get<std::string>();
  if (j.contains("shared_count") && !j["shared_count"].is_null()) c.shared_count = j["shared_count"].get<int>();
  return c;
}

std::string EpisodeSet::config_hash() const {
  return hash_json({{"split", to_string(split)},
                    {"split_mode", to_string(mode)},
                    {"config", config_to_json(config)},
                    {"seed", seed},
                    {"manifest_hash", manifest_hash}});
}

EpisodeSet build_episode_set(const DatasetManifest& manifest, const SplitPlan& plan, SplitTag tag,
                             const EpisodeSetConfig& config, std::uint64_t seed) {
  const EpisodeSampler sampler(manifest, plan, tag);
  EpisodeSet set;
  set.split = tag;
  set.mode = plan.mode;
  set.config = config;
  set.seed = seed;
  set.manifest_hash = manifest_hash(manifest);
  set.manifest_path = manifest.root / kManifestFile;

  std::vector<int> levels;
  if (config.shared_count) {
    levels.push_back(*config.shared_count);
  } else {
    for (int s = 0; s <= sampler.max_shared_count(); ++s) levels.push_back(s);
  }

  SampleRequest req;
  req.support_size = config.support_size;
  req.aspect = config.aspect;
  req.max_retries = config.max_retries;

  auto draw = [&](std::uint64_t index, std::optional<std::string> query) {
    auto rng = episode_rng(seed, index, tag);
    req.query_id = std::move(query);
    req.shared_count = levels[index % levels.size()];
    return sampler.sample(req, rng);
  };

  if (tag == SplitTag::kTrain) {
    if (config.count < 1) throw Error("episode count must be at least 1");
    for (std::uint64_t i = 0; i < config.count; ++i) set.episodes.push_back(draw(i, std::nullopt));
  } else {
    if (config.episodes_per_query < 1) throw Error("episodes_per_query must be at least 1");
    std::uint64_t index = 0;
    for (const auto& q : sampler.queries())
      for (int k = 0; k < config.episodes_per_query; ++k) set.episodes.push_back(draw(index++, q));
  }
  return set;
}

void write_episode_file(const std::filesystem::path& path, const EpisodeSet& set) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto dir = std::filesystem::absolute(path).parent_path();
  const auto manifest_rel = set.manifest_path.empty()
                                ? std::string()
                                : std::filesystem::absolute(set.manifest_path).lexically_relative(dir).generic_string();
  const nlohmann::json header{{"format", kEpisodeFormat},
                              {"split", to_string(set.split)},
                              {"split_mode", to_string(set.mode)},
                              {"seed", set.seed},
                              {"config", config_to_json(set.config)},
                              {"manifest", manifest_rel},
                              {"manifest_hash", set.manifest_hash},
                              {"config_hash", set.config_hash()},
                              {"episodes", set.episodes.size()}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << header.dump() << '\n';
  for (const auto& e : set.episodes) out << episode_to_json(e).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

EpisodeSet read_episode_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty episode file");
  EpisodeSet set;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kEpisodeFormat) throw IoError(path.string() + ": not an episode file");
    set.split = parse_split_tag(header.at("split").get<std::string>());
    set.mode = parse_split_mode(header.at("split_mode").get<std::string>());
    set.seed = header.at("seed").get<std::uint64_t>();
    set.config = episode_config_from_json(header.at("config"));
    set.manifest_hash = header.at("manifest_hash").get<std::string>();
    const auto rel = header.value("manifest", std::string());
    if (!rel.empty()) set.manifest_path = (path.parent_path() / rel).lexically_normal();
    while (std::getline(in, line))
      if (!line.empty()) set.episodes.push_back(episode_from_json(nlohmann::json::parse(line)));
    const auto expected = header.value("episodes", set.episodes.size());
    if (expected != set.episodes.size())
      throw IoError(path.string() + ": header announces " + std::to_string(expected) + " episodes, found " +
                    std::to_string(set.episodes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return set;
}

}  // namespace aspectfsl
