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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/model.hpp"
#include "aspectfsl/nn/layers.hpp"
#include "aspectfsl/shapegen.hpp"
#include "aspectfsl/training.hpp"

namespace {

using namespace aspectfsl;

Tensor<float> random_images(int n, int size, std::uint64_t seed) {
  Tensor<float> t(Shape4{n, 3, size, size});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

ModelConfig width(int c) {
  ModelConfig m = ModelConfig::defaults(Backbone::kShallow);
  m.backbone_channels = {c};
  m.dstm_channels = c;
  m.mask_channels = c;
  return m;
}

void BM_EpisodeForward(benchmark::State& state) {
  AspectModel<float> model(width(static_cast<int>(state.range(0))), 1);
  const auto images = random_images(5, 112, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(images, 4, Mode::kEval));
}
BENCHMARK(BM_EpisodeForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EpisodeForwardBackward(benchmark::State& state) {
  AspectModel<float> model(width(static_cast<int>(state.range(0))), 1);
  const auto images = random_images(5, 112, 2);
  for (auto _ : state) {
    const auto emb = model.forward(images, 4, Mode::kTrain);
    Tensor<float> grad(emb.shape());
    benchmark::DoNotOptimize(
        episode_tuplet_loss(emb.sample(0), 4, 0, emb.shape().sample_size(), grad.sample(0), 1.0));
    model.backward(grad);
  }
}
BENCHMARK(BM_EpisodeForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// One training step's worth of work: 16 episodes of N = 4 at width 16.
void BM_BatchForwardBackward(benchmark::State& state) {
  AspectModel<float> model(width(16), 1);
  const int episodes = static_cast<int>(state.range(0));
  const auto images = random_images(5 * episodes, 112, 2);
  for (auto _ : state) {
    const auto emb = model.forward(images, 4, Mode::kTrain);
    Tensor<float> grad(emb.shape());
    for (int e = 0; e < episodes; ++e)
      episode_tuplet_loss(emb.sample(5 * e), 4, 0, emb.shape().sample_size(), grad.sample(5 * e), 1.0 / episodes);
    model.backward(grad);
  }
  state.SetItemsProcessed(state.iterations() * episodes);
}
BENCHMARK(BM_BatchForwardBackward)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TupletLoss(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  std::vector<float> rows(5 * dim);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  for (auto& v : rows) v = g(rng);
  std::vector<float> grad(rows.size());
  for (auto _ : state) benchmark::DoNotOptimize(episode_tuplet_loss(rows.data(), 4, 1, dim, grad.data(), 1.0));
}
BENCHMARK(BM_TupletLoss)->Arg(3136)->Arg(12544);

void BM_AspectOracle(benchmark::State& state) {
  const auto schema = shapes::default_schema();
  std::mt19937_64 rng(4);
  std::vector<PropertyVector> vecs;
  for (int i = 0; i < 5; ++i) {
    std::vector<int> codes;
    for (const auto& p : schema.properties())
      codes.push_back(static_cast<int>(rng() % p.domain.size()));
    vecs.push_back(decode(schema, codes));
  }
  const std::span<const PropertyVector> support(vecs.data() + 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(aspect_oracle(vecs[0], support));
}
BENCHMARK(BM_AspectOracle);

void BM_EpisodeSampler(benchmark::State& state) {
  DatasetManifest manifest;
  manifest.schema = shapes::default_schema();
  std::vector<int> codes(manifest.schema.size(), 0);
  for (std::size_t ord = 0; ord < manifest.schema.combination_count(); ++ord) {
    std::size_t rest = ord;
    for (std::size_t p = manifest.schema.size(); p-- > 0;) {
      const std::size_t k = manifest.schema.properties()[p].domain.size();
      codes[p] = static_cast<int>(rest % k);
      rest /= k;
    }
    ManifestRecord r;
    r.sample_id = "s" + std::to_string(ord);
    r.properties = decode(manifest.schema, codes);
    manifest.records.push_back(r);
  }
  const auto plan = make_split(manifest, SplitMode::kQuery, {0.8, 0.1, 0.1}, 5);
  const EpisodeSampler sampler(manifest, plan, SplitTag::kTrain);
  std::mt19937_64 rng(6);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.sample(SampleRequest{}, rng));
}
BENCHMARK(BM_EpisodeSampler);

}  // namespace
BENCHMARK_MAIN();
