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

#include "aspectfsl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "aspectfsl/checkpoint.hpp"
#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/training.hpp"

namespace aspectfsl {

std::vector<double> support_distances(std::span<const float> query, std::span<const std::span<const float>> support) {
  std::vector<double> out;
  out.reserve(support.size());
  for (const auto& s : support) {
    if (s.size() != query.size()) throw ShapeError("embedding length mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double d = static_cast<double>(query[i]) - s[i];
      acc += d * d;
    }
    out.push_back(std::sqrt(acc));
  }
  return out;
}

EpisodeDistances episode_distances(std::span<const float> query, std::span<const std::span<const float>> support,
                                   int positive_index) {
  if (positive_index < 0 || static_cast<std::size_t>(positive_index) >= support.size())
    throw Error("positive index out of range");
  const auto all = support_distances(query, support);
  EpisodeDistances d;
  d.pos = all[static_cast<std::size_t>(positive_index)];
  for (std::size_t i = 0; i < all.size(); ++i)
    if (static_cast<int>(i) != positive_index) d.negs.push_back(all[i]);
  return d;
}

double distance_ratio(double pos_mean, double neg_mean) {
  if (pos_mean <= 0) throw Error("distance ratio needs a positive mean distance");
  return std::abs(neg_mean - pos_mean) / pos_mean;
}

std::pair<double, double> distance_ratio_interval(double pos_mean, double pos_ci, double neg_mean, double neg_ci) {
  const double pos_hi = pos_mean + pos_ci;
  const double pos_lo = pos_mean - pos_ci;
  if (pos_mean <= 0 || pos_lo <= 0)
    throw Error("distance ratio interval needs a positive lower bound on the positive distance");
  const double lo = std::abs((neg_mean - neg_ci) - pos_hi) / pos_hi;
  const double hi = std::abs((neg_mean + neg_ci) - pos_lo) / pos_lo;
  return {lo, hi};
}

double ci95(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

std::vector<DistanceReport> aggregate(std::span<const EpisodeRecord> records, const std::string& model,
                                      const std::string& split_mode) {
  std::map<int, std::vector<const EpisodeRecord*>> groups;
  for (const auto& r : records) groups[r.shared_count].push_back(&r);
  std::vector<DistanceReport> out;
  for (const auto& [s, rs] : groups) {
    std::vector<double> pos, neg;
    std::size_t hits = 0;
    for (const auto* r : rs) {
      pos.push_back(r->distances.at(static_cast<std::size_t>(r->positive_index)));
      double acc = 0;
      for (std::size_t i = 0; i < r->distances.size(); ++i)
        if (static_cast<int>(i) != r->positive_index) acc += r->distances[i];
      neg.push_back(acc / static_cast<double>(r->distances.size() - 1));
      if (r->predicted_index == r->positive_index) ++hits;
    }
    DistanceReport rep;
    rep.model = model;
    rep.split_mode = split_mode;
    rep.shared_count = s;
    rep.n_episodes = rs.size();
    rep.avg_pos = std::accumulate(pos.begin(), pos.end(), 0.0) / static_cast<double>(pos.size());
    rep.avg_neg = std::accumulate(neg.begin(), neg.end(), 0.0) / static_cast<double>(neg.size());
    rep.pos_ci = ci95(pos);
    rep.neg_ci = ci95(neg);
    if (rep.avg_pos - rep.pos_ci > 0) {
      std::tie(rep.ratio_lo, rep.ratio_hi) = distance_ratio_interval(rep.avg_pos, rep.pos_ci, rep.avg_neg, rep.neg_ci);
    } else {
      // Collapsed positive distances: the interval is unbounded above.
      rep.ratio_lo = rep.avg_pos + rep.pos_ci > 0
                         ? std::abs((rep.avg_neg - rep.neg_ci) - (rep.avg_pos + rep.pos_ci)) / (rep.avg_pos + rep.pos_ci)
                         : 0;
      rep.ratio_hi = std::numeric_limits<double>::infinity();
    }
    rep.match_accuracy = static_cast<double>(hits) / static_cast<double>(rs.size());
    out.push_back(rep);
  }
  return out;
}

namespace {

std::string default_model_name(const ModelConfig& c) {
  if (!c.use_dstm) return "baseline-" + to_string(c.backbone);
  return "dstm-" + to_string(c.backbone) + "-" + to_string(c.dstm_block);
}

}  // namespace

EvaluationResult evaluate_model(AspectModel<float>& model, const ImageSet& images, const DatasetManifest& manifest,
                                const EpisodeSet& set, const std::string& model_name, int batch_size) {
  EvaluationResult result;
  const auto& eps = set.episodes;
  for (std::size_t b = 0; b < eps.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(batch_size), eps.size() - b);
    const std::span<const Episode> chunk(eps.data() + b, m);
    const int n = static_cast<int>(chunk.front().support_ids.size());
    const Tensor<float> emb = model.forward(assemble_images<float>(images, chunk), n, Mode::kEval);
    const std::size_t dim = emb.shape().sample_size();
    for (std::size_t i = 0; i < m; ++i) {
      const Episode& e = chunk[i];
      std::vector<PropertyVector> support;
      for (const auto& id : e.support_ids) support.push_back(manifest.records[manifest.index_of(id)].properties);
      const auto match = aspect_oracle(manifest.records[manifest.index_of(e.query_id)].properties, support);
      if (!match.matched_index || static_cast<int>(*match.matched_index) != e.positive_index)
        throw Error("episode " + std::to_string(b + i) + " (query " + e.query_id +
                    "): positive_index disagrees with the aspect oracle");
      const int row = static_cast<int>(i) * (n + 1);
      std::vector<std::span<const float>> sv;
      for (int k = 0; k < n; ++k) sv.emplace_back(emb.sample(row + 1 + k), dim);
      EpisodeRecord rec;
      rec.index = b + i;
      rec.query_id = e.query_id;
      rec.support_ids = e.support_ids;
      rec.aspect_property = e.aspect_property;
      rec.shared_count = e.shared_count;
      rec.positive_index = e.positive_index;
      rec.distances = support_distances(std::span<const float>(emb.sample(row), dim), sv);
      rec.predicted_index = static_cast<int>(
          std::min_element(rec.distances.begin(), rec.distances.end()) - rec.distances.begin());
      result.episodes.push_back(std::move(rec));
    }
  }
  result.reports = aggregate(result.episodes, model_name, to_string(set.mode));
  return result;
}

EvaluationResult evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& episode_file,
                          std::optional<std::string> model_name, int batch_size) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const EpisodeSet set = read_episode_file(episode_file);
  const std::string ck_hash = ck.meta.value("manifest_hash", std::string());
  if (ck_hash != set.manifest_hash)
    throw Error("checkpoint " + checkpoint.string() + " was trained on dataset " + ck_hash + " but " +
                episode_file.string() + " refers to dataset " + set.manifest_hash);
  const DatasetManifest manifest = load_manifest(set.manifest_path);
  if (manifest_hash(manifest) != set.manifest_hash)
    throw Error("manifest " + set.manifest_path.string() + " changed since " + episode_file.string() + " was built");
  if (set.episodes.empty()) throw Error(episode_file.string() + " contains no episodes");
  const ModelConfig config = model_config_from_json(ck.meta.at("model_config"));
  AspectModel<float> model(config, 0);
  import_arrays(ck, model.parameters());
  const ImageSet images(manifest);
  if (images.image_size() != config.image_size)
    throw ShapeError("dataset image size " + std::to_string(images.image_size()) + " differs from model input size " +
                     std::to_string(config.image_size));
  return evaluate_model(model, images, manifest, set, model_name.value_or(default_model_name(config)), batch_size);
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kReportHeader =
    "model,split_mode,shared_count,n_episodes,avg_pos,pos_ci,avg_neg,neg_ci,ratio_lo,ratio_hi,match_accuracy";

}  // namespace

void write_report_csv(std::span<const DistanceReport> reports, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << kReportHeader << "\n";
  for (const auto& r : reports)
    os << r.model << ',' << r.split_mode << ',' << r.shared_count << ',' << r.n_episodes << ',' << g17(r.avg_pos)
       << ',' << g17(r.pos_ci) << ',' << g17(r.avg_neg) << ',' << g17(r.neg_ci) << ',' << g17(r.ratio_lo) << ','
       << g17(r.ratio_hi) << ',' << g17(r.match_accuracy) << "\n";
}

std::vector<DistanceReport> read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) throw SchemaError(path.string() + ": unexpected header");
  std::vector<DistanceReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw SchemaError(path.string() + ": malformed row '" + line + "'");
    DistanceReport r;
    r.model = f[0];
    r.split_mode = f[1];
    r.shared_count = std::stoi(f[2]);
    r.n_episodes = std::stoul(f[3]);
    r.avg_pos = std::stod(f[4]);
    r.pos_ci = std::stod(f[5]);
    r.avg_neg = std::stod(f[6]);
    r.neg_ci = std::stod(f[7]);
    r.ratio_lo = std::stod(f[8]);
    r.ratio_hi = std::stod(f[9]);
    r.match_accuracy = std::stod(f[10]);
    out.push_back(r);
  }
  return out;
}

std::string format_report_table(std::span<const DistanceReport> reports) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-7s %2s %6s %18s %18s %13s %8s\n", "model", "split", "s", "n",
                "pos dist", "neg dist", "ratio", "match");
  os << buf;
  for (const auto& r : reports) {
    char pos[40], neg[40], ratio[40];
    std::snprintf(pos, sizeof pos, "%.3f ± %.3f", r.avg_pos, r.pos_ci);
    std::snprintf(neg, sizeof neg, "%.3f ± %.3f", r.avg_neg, r.neg_ci);
    std::snprintf(ratio, sizeof ratio, "%.2f-%.2f", r.ratio_lo, r.ratio_hi);
    std::snprintf(buf, sizeof buf, "%-28s %-7s %2d %6zu %20s %20s %13s %8.3f\n", r.model.c_str(),
                  r.split_mode.c_str(), r.shared_count, r.n_episodes, pos, neg, ratio, r.match_accuracy);
    os << buf;
  }
  return os.str();
}

nlohmann::json fig3_export(std::span<const EpisodeRecord> records, std::size_t max_sets) {
  nlohmann::json out{{"query", nullptr}, {"support_sets", nlohmann::json::array()}};
  if (records.empty()) return out;
  const std::string query = records.front().query_id;
  std::vector<const EpisodeRecord*> mine;
  for (const auto& r : records)
    if (r.query_id == query) mine.push_back(&r);
  // Prefer distinct shared counts, highest first, then fill in record order.
  std::vector<const EpisodeRecord*> picked;
  std::set<int> seen;
  std::vector<const EpisodeRecord*> by_s = mine;
  std::stable_sort(by_s.begin(), by_s.end(), [](auto* a, auto* b) { return a->shared_count > b->shared_count; });
  for (auto* r : by_s)
    if (picked.size() < max_sets && seen.insert(r->shared_count).second) picked.push_back(r);
  for (auto* r : mine)
    if (picked.size() < max_sets && std::find(picked.begin(), picked.end(), r) == picked.end()) picked.push_back(r);

  out["query"] = query;
  for (const auto* r : picked) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t i = 0; i < r->support_ids.size(); ++i)
      cells.push_back({{"sample_id", r->support_ids[i]},
                       {"distance", r->distances[i]},
                       {"positive", static_cast<int>(i) == r->positive_index},
                       {"predicted", static_cast<int>(i) == r->predicted_index}});
    out["support_sets"].push_back({{"episode", r->index},
                                   {"aspect_property", r->aspect_property},
                                   {"shared_count", r->shared_count},
                                   {"supports", cells}});
  }
  return out;
}

void render_report(const EvaluationResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_report_csv(result.reports, out_dir / "report.csv");
  {
    std::ofstream os(out_dir / "report.txt");
    if (!os) throw IoError("cannot write " + (out_dir / "report.txt").string());
    os << format_report_table(result.reports);
  }
  {
    std::ofstream os(out_dir / "raw_distances.csv");
    if (!os) throw IoError("cannot write " + (out_dir / "raw_distances.csv").string());
    os << "episode,query_id,shared_count,aspect_property,positive_index,predicted_index,support_index,sample_id,"
          "distance\n";
    for (const auto& r : result.episodes)
      for (std::size_t i = 0; i < r.distances.size(); ++i)
        os << r.index << ',' << r.query_id << ',' << r.shared_count << ',' << r.aspect_property << ','
           << r.positive_index << ',' << r.predicted_index << ',' << i << ',' << r.support_ids[i] << ','
           << g17(r.distances[i]) << "\n";
  }
  write_json_file(out_dir / "fig3_export.json", fig3_export(result.episodes));
}

}  // namespace aspectfsl
