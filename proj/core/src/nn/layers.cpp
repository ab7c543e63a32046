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

#include "aspectfsl/nn/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace aspectfsl::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// [C·k·k, Ho·Wo] patch matrix of one CHW sample.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = x + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    T* plane = x + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_channels(const Tensor<T>& x, int expected, const std::string& who) {
  if (x.c() != expected)
    throw ShapeError(who + ": expected " + std::to_string(expected) + " channels, got " + x.shape().str());
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in, int out, int kernel, int stride, int pad, bool bias)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
  if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || pad < 0) throw ShapeError("invalid Conv2d geometry");
  weight_ = Tensor<T>({out, in * kernel * kernel, 1, 1});
  grad_weight_ = Tensor<T>(weight_.shape());
  bias_ = Tensor<T>({out, 1, 1, 1});
  grad_bias_ = Tensor<T>(bias_.shape());
}

template <typename T>
Shape4 Conv2d<T>::output_shape(Shape4 in) const {
  const int ho = (in.h + 2 * pad_ - kernel_) / stride_ + 1;
  const int wo = (in.w + 2 * pad_ - kernel_) / stride_ + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("Conv2d: input " + in.str() + " too small");
  return {in.n, out_, ho, wo};
}

template <typename T>
std::string Conv2d<T>::describe() const {
  return "Conv" + std::to_string(kernel_) + "x" + std::to_string(kernel_) + "(" + std::to_string(in_) + "->" +
         std::to_string(out_) + ", stride " + std::to_string(stride_) + ")";
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &weight_, &grad_weight_});
  if (has_bias_) out.push_back({prefix + "bias", &bias_, &grad_bias_});
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_) * kernel_ * kernel_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : weight_.vec()) v = static_cast<T>(dist(rng));
  bias_.fill(T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  check_channels(x, in_, describe());
  const Shape4 os = output_shape(x.shape());
  input_ = x;
  Tensor<T> y(os);
  const int kk = in_ * kernel_ * kernel_;
  const std::size_t p = os.plane();
  const bool pointwise = kernel_ == 1 && stride_ == 1 && pad_ == 0;
  typename Tensor<T>::Storage cols(pointwise ? 0 : static_cast<std::size_t>(kk) * p);
  Eigen::Map<const RowMat<T>> weight(weight_.data(), out_, kk);
  Eigen::Map<const Vec<T>> bias(bias_.data(), out_);
  for (int i = 0; i < x.n(); ++i) {
    Eigen::Map<RowMat<T>> out(y.sample(i), out_, static_cast<Eigen::Index>(p));
    if (pointwise) {
      out.noalias() = weight * Eigen::Map<const RowMat<T>>(x.sample(i), kk, static_cast<Eigen::Index>(p));
    } else {
      im2col(x.sample(i), in_, x.h(), x.w(), kernel_, stride_, pad_, os.h, os.w, cols.data());
      out.noalias() = weight * Eigen::Map<const RowMat<T>>(cols.data(), kk, static_cast<Eigen::Index>(p));
    }
    if (has_bias_) out.colwise() += bias;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Shape4 is = input_.shape();
  const Shape4 os = output_shape(is);
  if (!(grad_out.shape() == os)) throw ShapeError("Conv2d backward: gradient shape mismatch");
  const int kk = in_ * kernel_ * kernel_;
  const auto p = static_cast<Eigen::Index>(os.plane());
  const bool pointwise = kernel_ == 1 && stride_ == 1 && pad_ == 0;
  typename Tensor<T>::Storage cols(pointwise ? 0 : static_cast<std::size_t>(kk) * p);
  typename Tensor<T>::Storage dcols(this->input_grad_ && !pointwise ? cols.size() : 0);
  Eigen::Map<const RowMat<T>> weight(weight_.data(), out_, kk);
  Eigen::Map<RowMat<T>> gw(grad_weight_.data(), out_, kk);
  Eigen::Map<Vec<T>> gb(grad_bias_.data(), out_);
  Tensor<T> dx = this->input_grad_ ? Tensor<T>(is) : Tensor<T>();
  for (int i = 0; i < is.n; ++i) {
    Eigen::Map<const RowMat<T>> dy(grad_out.sample(i), out_, p);
    if (has_bias_) gb += dy.rowwise().sum();
    if (pointwise) {
      Eigen::Map<const RowMat<T>> xin(input_.sample(i), kk, p);
      gw.noalias() += dy * xin.transpose();
      if (this->input_grad_) Eigen::Map<RowMat<T>>(dx.sample(i), kk, p).noalias() = weight.transpose() * dy;
    } else {
      im2col(input_.sample(i), in_, is.h, is.w, kernel_, stride_, pad_, os.h, os.w, cols.data());
      Eigen::Map<const RowMat<T>> c(cols.data(), kk, p);
      gw.noalias() += dy * c.transpose();
      if (this->input_grad_) {
        Eigen::Map<RowMat<T>>(dcols.data(), kk, p).noalias() = weight.transpose() * dy;
        col2im(dcols.data(), in_, is.h, is.w, kernel_, stride_, pad_, os.h, os.w, dx.sample(i));
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  const Shape4 s{channels, 1, 1, 1};
  gamma_ = Tensor<T>(s, T(1));
  beta_ = Tensor<T>(s);
  grad_gamma_ = Tensor<T>(s);
  grad_beta_ = Tensor<T>(s);
  running_mean_ = Tensor<T>(s);
  running_var_ = Tensor<T>(s, T(1));
}

template <typename T>
std::string BatchNorm2d<T>::describe() const {
  return "BatchNorm(" + std::to_string(channels_) + ")";
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "gamma", &gamma_, &grad_gamma_});
  out.push_back({prefix + "beta", &beta_, &grad_beta_});
  out.push_back({prefix + "running_mean", &running_mean_, nullptr});
  out.push_back({prefix + "running_var", &running_var_, nullptr});
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  check_channels(x, channels_, describe());
  last_mode_ = mode;
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  Tensor<T> y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0, sq = 0;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / count;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma_[c], b = beta_[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.sample(n) + c * plane;
      T* xh = xhat_.sample(n) + c * plane;
      T* out = y.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = (p[i] - mean) * inv;
        xh[i] = static_cast<T>(v);
        out[i] = static_cast<T>(g * v + b);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  if (!(grad_out.shape() == xhat_.shape())) throw ShapeError("BatchNorm backward: gradient shape mismatch");
  const std::size_t plane = grad_out.shape().plane();
  const double count = static_cast<double>(plane) * grad_out.n();
  Tensor<T> dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int n = 0; n < grad_out.n(); ++n) {
      const T* dy = grad_out.sample(n) + c * plane;
      const T* xh = xhat_.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    grad_gamma_[c] += static_cast<T>(sum_dy_xhat);
    grad_beta_[c] += static_cast<T>(sum_dy);
    const double g = gamma_[c], inv = inv_std_[c];
    for (int n = 0; n < grad_out.n(); ++n) {
      const T* dy = grad_out.sample(n) + c * plane;
      const T* xh = xhat_.sample(n) + c * plane;
      T* out = dx.sample(n) + c * plane;
      if (last_mode_ == Mode::kTrain) {
        for (std::size_t i = 0; i < plane; ++i)
          out[i] = static_cast<T>(g * inv / count * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat));
      } else {
        for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<T>(g * inv * dy[i]);
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode) {
  output_ = x;
  for (auto& v : output_.vec()) v = v < T(0) ? T(0) : v;
  return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = output_[i] > T(0) ? grad_out[i] : T(0);
  return dx;
}

// --------------------------------------------------------------- pooling

template <typename T>
Shape4 MaxPool2d<T>::output_shape(Shape4 in) const {
  if (in.h < window_ || in.w < window_) throw ShapeError(describe() + ": input " + in.str() + " too small");
  return {in.n, in.c, in.h / window_, in.w / window_};
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode) {
  in_shape_ = x.shape();
  const Shape4 os = output_shape(in_shape_);
  Tensor<T> y(os);
  argmax_.assign(os.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t where = 0;
          for (int ky = 0; ky < window_; ++ky)
            for (int kx = 0; kx < window_; ++kx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(n) * in_shape_.c + c) * in_shape_.h + oy * window_ + ky) * in_shape_.w +
                  ox * window_ + kx;
              if (x[idx] > best || std::isnan(x[idx])) {
                best = x[idx];
                where = idx;
              }
            }
          y[o] = best;
          argmax_[o] = where;
        }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

template <typename T>
Shape4 AvgPool2d<T>::output_shape(Shape4 in) const {
  if (in.h < window_ || in.w < window_) throw ShapeError(describe() + ": input " + in.str() + " too small");
  return {in.n, in.c, in.h / window_, in.w / window_};
}

template <typename T>
Tensor<T> AvgPool2d<T>::forward(const Tensor<T>& x, Mode) {
  in_shape_ = x.shape();
  const Shape4 os = output_shape(in_shape_);
  Tensor<T> y(os);
  const T scale = T(1) / static_cast<T>(window_ * window_);
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < window_; ++ky)
            for (int kx = 0; kx < window_; ++kx) acc += x.at(n, c, oy * window_ + ky, ox * window_ + kx);
          y.at(n, c, oy, ox) = acc * scale;
        }
  return y;
}

template <typename T>
Tensor<T> AvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const Shape4 os = grad_out.shape();
  const T scale = T(1) / static_cast<T>(window_ * window_);
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          const T g = grad_out.at(n, c, oy, ox) * scale;
          for (int ky = 0; ky < window_; ++ky)
            for (int kx = 0; kx < window_; ++kx) dx.at(n, c, oy * window_ + ky, ox * window_ + kx) += g;
        }
  return dx;
}

// ------------------------------------------------------------ Sequential

template <typename T>
Sequential<T>& Sequential<T>::add(LayerPtr<T> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
Shape4 Sequential<T>::output_shape(Shape4 in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

template <typename T>
std::string Sequential<T>::describe() const {
  std::string s;
  for (const auto& l : layers_) s += (s.empty() ? "" : " > ") + l->describe();
  return s;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(prefix + std::to_string(i) + ".", out);
}

template <typename T>
void Sequential<T>::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
void Sequential<T>::set_input_grad(bool enabled) {
  this->input_grad_ = enabled;
  if (!layers_.empty()) layers_.front()->set_input_grad(enabled);
}

// --------------------------------------------------------- ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(int in, int out, int stride) : in_(in), out_(out), stride_(stride) {
  main_.template emplace<Conv2d<T>>(in, out, 3, stride, 1, false)
      .template emplace<BatchNorm2d<T>>(out)
      .template emplace<ReLU<T>>()
      .template emplace<Conv2d<T>>(out, out, 3, 1, 1, false)
      .template emplace<BatchNorm2d<T>>(out);
  if (in != out || stride != 1) {
    shortcut_ = std::make_unique<Sequential<T>>();
    shortcut_->template emplace<Conv2d<T>>(in, out, 1, stride, 0, false).template emplace<BatchNorm2d<T>>(out);
  }
}

template <typename T>
Shape4 ResidualBlock<T>::output_shape(Shape4 in) const {
  return main_.output_shape(in);
}

template <typename T>
std::string ResidualBlock<T>::describe() const {
  return "Residual(" + std::to_string(in_) + "->" + std::to_string(out_) + ", stride " + std::to_string(stride_) +
         ")";
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  main_.collect(prefix + "main.", out);
  if (shortcut_) shortcut_->collect(prefix + "shortcut.", out);
}

template <typename T>
void ResidualBlock<T>::init(std::mt19937_64& rng) {
  main_.init(rng);
  if (shortcut_) shortcut_->init(rng);
}

template <typename T>
void ResidualBlock<T>::set_input_grad(bool enabled) {
  this->input_grad_ = enabled;
  main_.set_input_grad(enabled);
  if (shortcut_) shortcut_->set_input_grad(enabled);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = main_.forward(x, mode);
  if (shortcut_) {
    y += shortcut_->forward(x, mode);
  } else {
    y += x;
  }
  for (auto& v : y.vec()) v = v < T(0) ? T(0) : v;
  output_ = y;
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output_[i] > T(0) ? grad_out[i] : T(0);
  Tensor<T> dx = main_.backward(g);
  if (!this->input_grad_) {
    if (shortcut_) shortcut_->backward(g);
    return dx;
  }
  if (shortcut_) {
    dx += shortcut_->backward(g);
  } else {
    dx += g;
  }
  return dx;
}

template <typename T>
LayerPtr<T> conv_bn_relu(int in, int out, int stride) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->template emplace<Conv2d<T>>(in, out, 3, stride, 1, false)
      .template emplace<BatchNorm2d<T>>(out)
      .template emplace<ReLU<T>>();
  return seq;
}

#define AFSL_INSTANTIATE(T)                               \
  template class Conv2d<T>;                               \
  template class BatchNorm2d<T>;                          \
  template class ReLU<T>;                                 \
  template class MaxPool2d<T>;                            \
  template class AvgPool2d<T>;                            \
  template class Sequential<T>;                           \
  template class ResidualBlock<T>;                        \
  template LayerPtr<T> conv_bn_relu<T>(int, int, int);

AFSL_INSTANTIATE(float)
AFSL_INSTANTIATE(double)
#undef AFSL_INSTANTIATE

}  // namespace aspectfsl::nn
