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

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "aspectfsl/nn/tensor.hpp"

namespace aspectfsl::nn {

enum class Mode { kTrain, kEval };

/// A named parameter or buffer. Buffers (BN running statistics) have no grad.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

/// Layer with a hand-written backward pass. `backward` consumes the state
/// cached by the most recent `forward` and accumulates parameter gradients.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual Shape4 output_shape(Shape4 in) const = 0;
  virtual std::string describe() const = 0;
  virtual void collect(const std::string& /*prefix*/, std::vector<ParamRef<T>>& /*out*/) {}
  virtual void init(std::mt19937_64& /*rng*/) {}
  /// When false, backward may skip computing the input gradient.
  virtual void set_input_grad(bool enabled) { input_grad_ = enabled; }

 protected:
  bool input_grad_ = true;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  /// `bias = false` for convolutions whose output is re-centered downstream.
  Conv2d(int in, int out, int kernel, int stride = 1, int pad = 0, bool bias = true);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override;
  std::string describe() const override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void init(std::mt19937_64& rng) override;

 private:
  int in_, out_, kernel_, stride_, pad_;
  bool has_bias_;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override { return in; }
  std::string describe() const override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;

 private:
  int channels_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, grad_gamma_, grad_beta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::kEval;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override { return in; }
  std::string describe() const override { return "ReLU"; }

 private:
  Tensor<T> output_;
};

/// Non-overlapping max pooling (stride = window).
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  explicit MaxPool2d(int window) : window_(window) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override;
  std::string describe() const override { return "MaxPool" + std::to_string(window_); }

 private:
  int window_;
  Shape4 in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Non-overlapping average pooling (stride = window).
template <typename T>
class AvgPool2d final : public Layer<T> {
 public:
  explicit AvgPool2d(int window) : window_(window) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override;
  std::string describe() const override { return "AvgPool" + std::to_string(window_); }

 private:
  int window_;
  Shape4 in_shape_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential& add(LayerPtr<T> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override;
  std::string describe() const override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void init(std::mt19937_64& rng) override;
  void set_input_grad(bool enabled) override;

  std::size_t size() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// conv3x3-BN-ReLU-conv3x3-BN plus identity (or 1x1 conv + BN projection
/// when the shape changes), followed by ReLU.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(int in, int out, int stride = 1);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape4 output_shape(Shape4 in) const override;
  std::string describe() const override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void init(std::mt19937_64& rng) override;
  void set_input_grad(bool enabled) override;

 private:
  int in_, out_, stride_;
  Sequential<T> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  Tensor<T> output_;
};

/// conv3x3 (stride 1, same padding) + BN + ReLU.
template <typename T>
LayerPtr<T> conv_bn_relu(int in, int out, int stride = 1);

}  // namespace aspectfsl::nn
