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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/error.hpp"
#include "aspectfsl/evaluation.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/model.hpp"
#include "aspectfsl/pipeline.hpp"
#include "aspectfsl/shapegen.hpp"
#include "aspectfsl/training.hpp"

namespace fs = std::filesystem;
using namespace aspectfsl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared dataset and split used by criteria 3, 6 and 7.
struct Desk {
  DatasetManifest manifest;
  SplitPlan plan;
  std::unique_ptr<ImageSet> images;
};

Desk& desk(const fs::path& work) {
  static Desk d = [&] {
    Desk x;
    x.manifest = shapes::build_dataset(shapes::default_schema(), work / "shapes");
    x.plan = make_split(x.manifest, SplitMode::kQuery, {0.6, 0.1, 0.3}, 2024);
    x.images = std::make_unique<ImageSet>(x.manifest);
    return x;
  }();
  return d;
}

ModelConfig desk_model(bool dstm) {
  ModelConfig c = ModelConfig::defaults(Backbone::kShallow);
  c.backbone_channels = {16};
  c.dstm_channels = 16;
  c.mask_channels = 16;
  c.use_dstm = dstm;
  return c;
}

// Default TrainConfig: AdamW, lr 7e-4, weight decay 1e-2, 50 epochs of 2000
// episodes, batches of 16.
TrainConfig desk_train() { return TrainConfig{}; }

// 1. Tuplet loss against the analytic formula.
Outcome tuplet_fidelity() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim_d(1, 8), neg_d(1, 6);
  std::normal_distribution<double> val(0.0, 1.0);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int dim = dim_d(rng);
    const int nn = neg_d(rng);
    auto draw = [&] {
      std::vector<double> v(static_cast<std::size_t>(dim));
      for (auto& x : v) x = val(rng);
      return v;
    };
    const auto q = draw();
    const auto p = draw();
    std::vector<std::vector<double>> negs;
    for (int j = 0; j < nn; ++j) negs.push_back(draw());
    auto d2 = [&](const std::vector<double>& a) {
      double s = 0;
      for (int i = 0; i < dim; ++i) s += (q[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)]) *
                                         (q[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)]);
      return s;
    };
    double sum = 0;
    for (const auto& n : negs) sum += std::exp(d2(p) - d2(n));
    const double oracle = std::log(1.0 + sum);
    std::vector<std::span<const double>> spans(negs.begin(), negs.end());
    const double got = tuplet_loss<double>(q, p, spans);
    worst = std::max(worst, std::abs(got - oracle) / std::abs(oracle));
  }
  bool exact = true;
  for (int n = 2; n <= 10; ++n) {
    const std::vector<double> v{0.5, -1.0, 2.0};
    std::vector<std::span<const double>> negs(static_cast<std::size_t>(n - 1), std::span<const double>(v));
    exact &= tuplet_loss<double>(v, v, negs) == std::log(static_cast<double>(n));
  }
  return {worst < 1e-9 && exact, fmt("max relative error %.2e over 100 cases; log(N) exact for N=2..10: %s", worst,
                                     exact ? "yes" : "no")};
}

// 2. Ratio interval on the published baseline row.
Outcome ratio_reproduction() {
  const auto [lo, hi] = distance_ratio_interval(49.0, 0.46, 54.9, 0.28);
  const double rlo = std::round(lo * 100) / 100;
  const double rhi = std::round(hi * 100) / 100;
  return {rlo == 0.10 && rhi == 0.14, fmt("interval (%.4f, %.4f) rounds to (%.2f, %.2f)", lo, hi, rlo, rhi)};
}

template <typename T>
double max_diff(const T* a, const T* b, std::size_t n) {
  double m = 0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

// 3. Permutation suite on real episodes, random weights.
Outcome permutation_suite(const fs::path& work) {
  auto& d = desk(work);
  AspectModel<double> model(ModelConfig::defaults(Backbone::kShallow), 303);
  EpisodeSetConfig cfg;
  cfg.count = 50;
  const auto eps = build_episode_set(d.manifest, d.plan, SplitTag::kTrain, cfg, 303).episodes;
  std::mt19937_64 rng(304);
  double worst_mask = 0, worst_h = 0, worst_sum = 0;
  for (const auto& e : eps) {
    const Tensor<double> images = assemble_images<double>(*d.images, std::span(&e, 1));
    model.forward(images, 4, Mode::kEval);
    const Tensor<double> mask = model.last_mask();
    const Tensor<double> h = model.last_equivariant();
    std::vector<int> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> rows{0};
    for (int p : perm) rows.push_back(1 + p);
    model.forward(nn::gather_samples(images, rows), 4, Mode::kEval);
    worst_mask = std::max(worst_mask, max_diff(mask.data(), model.last_mask().data(), mask.size()));
    const std::size_t hs = h.shape().sample_size();
    for (int k = 0; k < 4; ++k)
      worst_h = std::max(worst_h, max_diff(h.sample(perm[static_cast<std::size_t>(k)]),
                                           model.last_equivariant().sample(k), hs));
    for (int y = 0; y < mask.h(); ++y)
      for (int x = 0; x < mask.w(); ++x) {
        double s = 0;
        for (int c = 0; c < mask.c(); ++c) s += mask.at(0, c, y, x);
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
  }
  return {worst_mask <= 1e-6 && worst_h <= 1e-6 && worst_sum <= 1e-5,
          fmt("50 episodes: max mask change %.2e, max h_i mismatch %.2e, max |sum-1| %.2e", worst_mask, worst_h,
              worst_sum)};
}

// 4. Oracle agreement on 10,000 sampled episodes.
Outcome oracle_agreement(const fs::path& work) {
  auto& d = desk(work);
  const auto t0 = std::chrono::steady_clock::now();
  const auto plan = make_split(d.manifest, SplitMode::kQuery, {0.8, 0.1, 0.1}, 404);
  const EpisodeSampler sampler(d.manifest, plan, SplitTag::kTrain);
  std::mt19937_64 rng(405);
  std::uniform_int_distribution<int> n_d(2, 5);
  int ok = 0;
  for (int i = 0; i < 10000; ++i) {
    SampleRequest req;
    req.support_size = n_d(rng);
    const Episode e = sampler.sample(req, rng);
    const auto& q = d.manifest.records[d.manifest.index_of(e.query_id)].properties;
    std::vector<PropertyVector> s;
    for (const auto& id : e.support_ids) s.push_back(d.manifest.records[d.manifest.index_of(id)].properties);
    const auto diag = validate_episode_semantics(d.manifest.schema, q, s);
    const auto m = aspect_oracle(q, s);
    ok += diag.passed && m.matched_index && static_cast<int>(*m.matched_index) == e.positive_index;
  }
  const double secs = seconds_since(t0);
  return {ok == 10000 && secs < 60, fmt("%d/10000 episodes valid with oracle agreement in %.1f s", ok, secs)};
}

// 5. Backprop against central differences, float64.
Outcome gradient_check(const fs::path& work) {
  auto& d = desk(work);
  ModelConfig cfg = desk_model(true);
  cfg.backbone_channels = {8};
  cfg.dstm_channels = 8;
  cfg.mask_channels = 8;
  AspectModel<double> model(cfg, 505);
  EpisodeSetConfig ec;
  ec.count = 2;
  const auto eps = build_episode_set(d.manifest, d.plan, SplitTag::kTrain, ec, 505).episodes;
  const Tensor<double> images = assemble_images<double>(*d.images, eps);
  auto loss = [&](Tensor<double>* grad) {
    const Tensor<double> emb = model.forward(images, 4, Mode::kTrain);
    const std::size_t dim = emb.shape().sample_size();
    double total = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const int row = static_cast<int>(i) * 5;
      total += episode_tuplet_loss(emb.sample(row), 4, eps[i].positive_index, dim,
                                   grad ? grad->sample(row) : nullptr, 1.0 / eps.size());
    }
    return total / static_cast<double>(eps.size());
  };
  auto params = model.parameters();
  std::vector<nn::ParamRef<double>> trainable;
  for (auto& p : params)
    if (p.grad) {
      p.grad->fill(0);
      trainable.push_back(p);
    }
  {
    const Tensor<double> emb = model.forward(images, 4, Mode::kTrain);
    Tensor<double> g(emb.shape());
    loss(&g);
    model.backward(g);
  }
  std::mt19937_64 rng(506);
  double worst = 0;
  int checked = 0;
  std::string worst_name;
  while (checked < 10) {
    auto& p = trainable[rng() % trainable.size()];
    const std::size_t i = rng() % p.value->size();
    const double analytic = (*p.grad)[i];
    const double keep = (*p.value)[i];
    const double h = 1e-5;
    (*p.value)[i] = keep + h;
    const double up = loss(nullptr);
    (*p.value)[i] = keep - h;
    const double down = loss(nullptr);
    (*p.value)[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / scale;
    if (rel > worst) {
      worst = rel;
      worst_name = p.name + "[" + std::to_string(i) + "]";
    }
    ++checked;
  }
  return {worst < 1e-3, fmt("10 random parameters, max relative error %.2e (%s)", worst, worst_name.c_str())};
}

struct TrainedModels {
  EvaluationResult baseline, dstm;
  AspectModel<float>* dstm_model = nullptr;
};

TrainedModels& trained(const fs::path& work) {
  static std::unique_ptr<AspectModel<float>> dstm_model;
  static TrainedModels t = [&] {
    auto& d = desk(work);
    const auto mhash = manifest_hash(d.manifest);
    EpisodeSetConfig train_cfg;
    train_cfg.count = 2000;
    const auto train_eps = build_episode_set(d.manifest, d.plan, SplitTag::kTrain, train_cfg, 7).episodes;
    EpisodeSetConfig val_cfg;
    val_cfg.episodes_per_query = 2;
    const auto val_eps = build_episode_set(d.manifest, d.plan, SplitTag::kVal, val_cfg, 7).episodes;
    EpisodeSet test = build_episode_set(d.manifest, d.plan, SplitTag::kTest, EpisodeSetConfig{}, 7);
    test.manifest_path = d.manifest.root / kManifestFile;
    write_episode_file(work / "desk" / "test.jsonl", test);

    TrainedModels out;
    for (bool use_dstm : {false, true}) {
      const std::string name = use_dstm ? "dstm" : "baseline";
      const auto t0 = std::chrono::steady_clock::now();
      TrainOptions opts;
      opts.manifest_hash = mhash;
      const auto r = train(desk_model(use_dstm), desk_train(), train_eps, val_eps, *d.images,
                           work / "desk" / name, opts);
      std::printf("  [desk] %s trained %d epochs in %.0f s, best val loss %.4f\n", name.c_str(), r.last_epoch,
                  seconds_since(t0), r.best_val_loss);
      auto res = evaluate(r.best_checkpoint, work / "desk" / "test.jsonl", name);
      render_report(res, work / "desk" / name / "reports");
      std::fputs(format_report_table(res.reports).c_str(), stdout);
      (use_dstm ? out.dstm : out.baseline) = std::move(res);
      if (use_dstm) dstm_model = std::make_unique<AspectModel<float>>(load_model(r.best_checkpoint));
    }
    out.dstm_model = dstm_model.get();
    std::fflush(stdout);
    return out;
  }();
  return t;
}

const DistanceReport* group(const EvaluationResult& r, int s) {
  for (const auto& rep : r.reports)
    if (rep.shared_count == s) return &rep;
  return nullptr;
}

// 6. Desk-scale reproduction of the qualitative claim.
Outcome desk_reproduction(const fs::path& work) {
  auto& t = trained(work);
  const auto* b2 = group(t.baseline, 2);
  const auto* d2 = group(t.dstm, 2);
  const auto* d1 = group(t.dstm, 1);
  if (!b2 || !d2 || !d1) return {false, "missing shared-count groups"};
  bool enough = true;
  for (const auto& rep : t.dstm.reports) enough &= rep.n_episodes >= 200;
  std::size_t hits = 0, total = 0;
  for (const auto& e : t.dstm.episodes) {
    hits += e.predicted_index == e.positive_index;
    ++total;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(total);
  const bool a = b2->ratio_hi < d2->ratio_lo;
  const bool b = acc > 0.8;
  const bool c = distance_ratio(d2->avg_pos, d2->avg_neg) >= distance_ratio(d1->avg_pos, d1->avg_neg);
  return {a && b && enough,
          fmt("(a) s=2 baseline ratio %.2f-%.2f vs DSTM %.2f-%.2f: %s; (b) DSTM match accuracy %.3f: %s; "
              "(c, logged) s=2 ratio %.3f vs s=1 ratio %.3f: %s; >=200 episodes per group: %s",
              b2->ratio_lo, b2->ratio_hi, d2->ratio_lo, d2->ratio_hi, a ? "ok" : "no", acc, b ? "ok" : "no",
              distance_ratio(d2->avg_pos, d2->avg_neg), distance_ratio(d1->avg_pos, d1->avg_neg),
              c ? "consistent" : "inconsistent", enough ? "yes" : "no")};
}

// 7. One query under three support sets; the argmin must follow the oracle.
Outcome argmin_follows_oracle(const fs::path& work) {
  auto& t = trained(work);
  auto& d = desk(work);
  const EpisodeSampler sampler(d.manifest, d.plan, SplitTag::kTest);
  std::mt19937_64 rng(707);
  int good = 0, changed = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::string query = sampler.queries()[static_cast<std::size_t>(trial) * 7 % sampler.queries().size()];
    std::vector<Episode> triple;
    SampleRequest a;
    a.query_id = query;
    a.aspect = "pattern";
    a.shared_count = 2;
    SampleRequest b = a;
    b.aspect = "color";
    b.shared_count = 1;
    SampleRequest c;
    c.query_id = query;
    c.shared_count = 0;
    for (const auto& r : {a, b, c}) triple.push_back(sampler.sample(r, rng));
    const Tensor<float> images = assemble_images<float>(*d.images, triple);
    std::vector<int> argmins;
    bool all = true;
    std::set<std::string> matched;
    for (std::size_t k = 0; k < 3; ++k) {
      const Tensor<float> emb =
          t.dstm_model->forward(nn::gather_samples(images, std::vector<int>{int(5 * k), int(5 * k + 1),
                                                                           int(5 * k + 2), int(5 * k + 3),
                                                                           int(5 * k + 4)}),
                                4, Mode::kEval);
      const std::size_t dim = emb.shape().sample_size();
      std::vector<std::span<const float>> sv;
      for (int j = 1; j <= 4; ++j) sv.emplace_back(emb.sample(j), dim);
      const auto dist = support_distances(std::span<const float>(emb.sample(0), dim), sv);
      const int argmin = static_cast<int>(std::min_element(dist.begin(), dist.end()) - dist.begin());
      std::vector<PropertyVector> s;
      for (const auto& id : triple[k].support_ids) s.push_back(d.manifest.records[d.manifest.index_of(id)].properties);
      const auto m = aspect_oracle(d.manifest.records[d.manifest.index_of(query)].properties, s);
      all &= m.matched_index && static_cast<int>(*m.matched_index) == argmin;
      matched.insert(triple[k].support_ids[static_cast<std::size_t>(argmin)]);
    }
    good += all;
    changed += matched.size() == 3;
  }
  return {good >= 8, fmt("%d/10 triples follow the oracle in all three support sets (%d/10 with three distinct "
                         "matched images)",
                         good, changed)};
}

// 8. Data stages are byte-identical across reruns.
Outcome determinism(const fs::path& work) {
  std::vector<nlohmann::json> trees;
  for (const char* tag : {"run_a", "run_b"}) {
    const fs::path root = work / "determinism" / tag;
    fs::remove_all(root);
    auto m = shapes::build_dataset(shapes::default_schema(), root / "data");
    const auto plan = make_split(m, SplitMode::kQuery, {0.7, 0.1, 0.2}, 8);
    write_json_file(root / "split.json", plan_to_json(plan));
    for (SplitTag tag_ : {SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest}) {
      EpisodeSetConfig cfg;
      cfg.count = 500;
      EpisodeSet set = build_episode_set(m, plan, tag_, cfg, 8);
      set.manifest_path = root / "data" / kManifestFile;
      write_episode_file(root / "episodes" / (to_string(tag_) + ".jsonl"), set);
    }
    trees.push_back(hash_tree(root));
  }
  return {trees[0] == trees[1] && trees[0].size() > 240,
          fmt("%zu files compared, identical: %s", trees[0].size(), trees[0] == trees[1] ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "aspectfsl_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--work-dir") && i + 1 < argc) {
      work = argv[++i];
    } else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--work-dir DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(work / "shapes");
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"tuplet loss formula fidelity", tuplet_fidelity},
      {"distance ratio interval reproduces (0.10, 0.14)", ratio_reproduction},
      {"DSTM permutation invariance/equivariance", [&] { return permutation_suite(work); }},
      {"10,000 fuzz episodes agree with the aspect oracle", [&] { return oracle_agreement(work); }},
      {"gradient check at float64", [&] { return gradient_check(work); }},
      {"desk-scale baseline vs DSTM reproduction", [&] { return desk_reproduction(work); }},
      {"argmin follows the oracle across support sets", [&] { return argmin_follows_oracle(work); }},
      {"deterministic gen-data/split/episodes", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d: %s | %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
