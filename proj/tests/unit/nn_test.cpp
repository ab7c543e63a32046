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

#include <cmath>
#include <cstdint>
#include <random>

#include <gtest/gtest.h>

#include "aspectfsl/error.hpp"
#include "aspectfsl/nn/layers.hpp"
#include "aspectfsl/nn/optim.hpp"

namespace aspectfsl::nn {
namespace {

Tensor<double> random_tensor(Shape4 s, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(s);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks input and parameter gradients of L = <layer(x), r> by central
// differences.
void check_gradients(Layer<double>& layer, Shape4 in, Mode mode, std::uint64_t seed = 1, double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  layer.init(rng);
  Tensor<double> x = random_tensor(in, rng);
  const Tensor<double> y = layer.forward(x, mode);
  const Tensor<double> r = random_tensor(y.shape(), rng);
  std::vector<ParamRef<double>> params;
  layer.collect("", params);
  for (auto& p : params)
    if (p.grad) p.grad->fill(0);
  const Tensor<double> gx = layer.backward(r);
  const double h = 1e-6;
  auto loss = [&] { return dot(layer.forward(x, mode), r); };
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40)) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    EXPECT_NEAR(gx[i], (up - down) / (2 * h), tol * std::max(1.0, std::abs(gx[i]))) << layer.describe() << " x" << i;
  }
  for (auto& p : params) {
    if (!p.grad) continue;
    Tensor<double>& w = *p.value;
    for (std::size_t i = 0; i < w.size(); i += std::max<std::size_t>(1, w.size() / 20)) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = loss();
      w[i] = keep - h;
      const double down = loss();
      w[i] = keep;
      EXPECT_NEAR((*p.grad)[i], (up - down) / (2 * h), tol * std::max(1.0, std::abs((*p.grad)[i])))
          << layer.describe() << " " << p.name << "[" << i << "]";
    }
  }
}

TEST(Conv2d, OutputShape) {
  Conv2d<double> c(3, 8, 3, 2, 1);
  EXPECT_EQ(c.output_shape({2, 3, 9, 9}), (Shape4{2, 8, 5, 5}));
  EXPECT_THROW(Conv2d<double>(0, 1, 3), ShapeError);
}

TEST(Conv2d, MatchesDirectConvolution) {
  std::mt19937_64 rng(4);
  Conv2d<double> c(2, 3, 3, 1, 1);
  c.init(rng);
  std::vector<ParamRef<double>> p;
  c.collect("", p);
  const Tensor<double>& w = *p[0].value;
  const Tensor<double> x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor<double> y = c.forward(x, Mode::kEval);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = 0;
        for (int ci = 0; ci < 2; ++ci)
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int yy = i + ki - 1, xx = j + kj - 1;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
              acc += w[static_cast<std::size_t>(o) * 18 + ci * 9 + ki * 3 + kj] * x.at(0, ci, yy, xx);
            }
        EXPECT_NEAR(y.at(0, o, i, j), acc, 1e-12);
      }
}

TEST(Conv2d, Gradients) {
  Conv2d<double> c(3, 4, 3, 1, 1);
  check_gradients(c, {2, 3, 6, 6}, Mode::kTrain);
}

TEST(Conv2d, StridedGradients) {
  Conv2d<double> c(2, 3, 3, 2, 1);
  check_gradients(c, {2, 2, 7, 7}, Mode::kTrain);
}

TEST(Conv2d, BiasFreeHasOnlyWeights) {
  Conv2d<double> c(2, 3, 3, 1, 1, false);
  std::vector<ParamRef<double>> p;
  c.collect("", p);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].name, "weight");
  check_gradients(c, {2, 2, 5, 5}, Mode::kTrain);
}

TEST(Conv2d, PointwiseGradients) {
  Conv2d<double> c(4, 3, 1);
  check_gradients(c, {2, 4, 5, 5}, Mode::kTrain);
}

TEST(BatchNorm2d, TrainModeNormalizes) {
  std::mt19937_64 rng(2);
  BatchNorm2d<double> bn(3);
  const Tensor<double> x = random_tensor({4, 3, 5, 5}, rng, 3.0);
  const Tensor<double> y = bn.forward(x, Mode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const double v = y.at(n, c, i / 5, i % 5);
        s += v;
        ss += v * v;
      }
    EXPECT_NEAR(s / 100, 0.0, 1e-9);
    EXPECT_NEAR(ss / 100, 1.0, 1e-3);
  }
}

TEST(BatchNorm2d, TrainGradients) {
  BatchNorm2d<double> bn(3);
  check_gradients(bn, {3, 3, 4, 4}, Mode::kTrain);
}

TEST(BatchNorm2d, EvalGradients) {
  BatchNorm2d<double> bn(2);
  check_gradients(bn, {2, 2, 3, 3}, Mode::kEval);
}

TEST(BatchNorm2d, RunningStatsUpdateOnlyInTraining) {
  std::mt19937_64 rng(5);
  BatchNorm2d<double> bn(2);
  const Tensor<double> x = random_tensor({2, 2, 3, 3}, rng);
  const Tensor<double> e1 = bn.forward(x, Mode::kEval);
  bn.forward(x, Mode::kEval);
  EXPECT_EQ(bn.forward(x, Mode::kEval).vec(), e1.vec());
  bn.forward(x, Mode::kTrain);
  EXPECT_NE(bn.forward(x, Mode::kEval).vec(), e1.vec());
}

TEST(Tensor, StorageIsAlignedAndRecycled) {
  release_tensor_cache();
  const float* first = nullptr;
  {
    Tensor<float> t({2, 16, 64, 64});
    first = t.data();
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(first) % 64, 0u);
  }
  EXPECT_EQ(tensor_cache_bytes(), 2u * 16 * 64 * 64 * sizeof(float));
  Tensor<float> again({2, 16, 64, 64}, 1.0f);
  EXPECT_EQ(again.data(), first);
  EXPECT_EQ(again[0], 1.0f);
  EXPECT_EQ(tensor_cache_bytes(), 0u);
  Tensor<double> small({1, 1, 3, 3});
  EXPECT_EQ(reinterpret_cast<std::uintptr_t>(small.data()) % 64, 0u);
  release_tensor_cache();
}

TEST(Pooling, MaxAndAverage) {
  Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 8, 6});
  MaxPool2d<double> mp(2);
  AvgPool2d<double> ap(2);
  EXPECT_EQ(mp.forward(x, Mode::kEval).to_vector(), (std::vector<double>{5, 8}));
  EXPECT_EQ(ap.forward(x, Mode::kEval).to_vector(), (std::vector<double>{13.0 / 4, 16.0 / 4}));
  EXPECT_EQ(mp.output_shape({1, 1, 3, 5}), (Shape4{1, 1, 1, 2}));
  EXPECT_THROW(mp.output_shape({1, 1, 1, 4}), ShapeError);
}

TEST(Pooling, Gradients) {
  MaxPool2d<double> mp(2);
  check_gradients(mp, {2, 2, 4, 4}, Mode::kTrain);
  AvgPool2d<double> ap(2);
  check_gradients(ap, {2, 2, 4, 4}, Mode::kTrain);
}

TEST(ReLU, Gradients) {
  ReLU<double> r;
  check_gradients(r, {2, 2, 3, 3}, Mode::kTrain);
}

TEST(ResidualBlock, IdentityAndProjectionGradients) {
  ResidualBlock<double> same(3, 3);
  check_gradients(same, {2, 3, 4, 4}, Mode::kTrain, 7, 1e-5);
  ResidualBlock<double> down(2, 4, 2);
  check_gradients(down, {2, 2, 4, 4}, Mode::kTrain, 8, 1e-5);
  EXPECT_EQ(down.output_shape({2, 2, 4, 4}), (Shape4{2, 4, 2, 2}));
}

TEST(Sequential, NamesParameters) {
  Sequential<double> s;
  s.add(conv_bn_relu<double>(3, 4));
  s.emplace<MaxPool2d<double>>(2);
  std::vector<ParamRef<double>> p;
  s.collect("net.", p);
  ASSERT_FALSE(p.empty());
  EXPECT_EQ(p[0].name.rfind("net.0.", 0), 0u);
  check_gradients(s, {2, 3, 4, 4}, Mode::kTrain, 3, 1e-5);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Tensor<double> w({1, 2, 1, 1}, std::vector<double>{1.0, -2.0});
  Tensor<double> g({1, 2, 1, 1}, std::vector<double>{0.5, -3.0});
  AdamW<double> opt({{"w", &w, &g}}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step();
  EXPECT_NEAR(w[0], 0.9, 1e-6);
  EXPECT_NEAR(w[1], -1.9, 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, DecoupledWeightDecay) {
  Tensor<double> w({1, 1, 1, 1}, std::vector<double>{2.0});
  Tensor<double> g({1, 1, 1, 1}, std::vector<double>{0.0});
  AdamW<double> opt({{"w", &w, &g}}, {0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step();
  EXPECT_NEAR(w[0], 2.0 * (1 - 0.1 * 0.5), 1e-12);
}

TEST(AdamW, MinimizesQuadratic) {
  Tensor<double> w({1, 3, 1, 1}, std::vector<double>{3, -1, 2});
  Tensor<double> g(w.shape());
  AdamW<double> opt({{"w", &w, &g}}, {0.05, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    for (std::size_t k = 0; k < 3; ++k) g[k] = 2 * (w[k] - 1.0);
    opt.step();
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(w[k], 1.0, 1e-3);
}

}  // namespace
}  // namespace aspectfsl::nn
