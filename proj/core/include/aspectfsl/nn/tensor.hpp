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

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aspectfsl/error.hpp"

namespace aspectfsl::nn {

/// NCHW extents.
struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

namespace detail {
/// 64-byte aligned blocks. Large blocks are recycled by exact size, since
/// batches of one shape request the same sizes over and over.
void* tensor_alloc(std::size_t bytes);
void tensor_free(void* p, std::size_t bytes) noexcept;
}  // namespace detail

/// Returns every cached block to the system allocator.
void release_tensor_cache();
/// Bytes currently held by the block cache.
std::size_t tensor_cache_bytes();

/// 64-byte aligned storage, so vectorized kernels see the same layout on
/// every run and produce bit-identical results.
template <typename T>
struct AlignedAllocator {
  using value_type = T;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(detail::tensor_alloc(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { detail::tensor_free(p, n * sizeof(T)); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

/// Dense NCHW array with value semantics.
template <typename T>
class Tensor {
 public:
  using Storage = std::vector<T, AlignedAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape4 shape, const std::vector<T>& data) : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data does not match shape " + shape_.str());
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  Storage& vec() { return data_; }
  const Storage& vec() const { return data_; }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T* sample(int i) { return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size(); }
  const T* sample(int i) const { return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  /// Changes the extents without touching the data.
  void reshape(Shape4 s) {
    if (s.size() != data_.size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    shape_ = s;
  }

  Tensor& operator+=(const Tensor& o) {
    if (!(o.shape_ == shape_)) throw ShapeError("shape mismatch " + shape_.str() + " vs " + o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape4 shape_;
  Storage data_;
};

/// Rows `indices` of `src` stacked in order.
template <typename T>
Tensor<T> gather_samples(const Tensor<T>& src, std::span<const int> indices) {
  Shape4 s = src.shape();
  s.n = static_cast<int>(indices.size());
  Tensor<T> out(s);
  const std::size_t len = s.sample_size();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(src.sample(indices[i]), len, out.sample(static_cast<int>(i)));
  return out;
}

/// Adds the rows of `src` into rows `indices` of `dst`.
template <typename T>
void scatter_add_samples(const Tensor<T>& src, std::span<const int> indices, Tensor<T>& dst) {
  const std::size_t len = src.shape().sample_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const T* s = src.sample(static_cast<int>(i));
    T* d = dst.sample(indices[i]);
    for (std::size_t k = 0; k < len; ++k) d[k] += s[k];
  }
}

/// Channel concatenation of two tensors with equal n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t la = a.shape().sample_size(), lb = b.shape().sample_size();
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.sample(i), la, out.sample(i));
    std::copy_n(b.sample(i), lb, out.sample(i) + la);
  }
  return out;
}

/// Inverse of concat_channels for gradients: first `channels_a` channels go to `a`.
template <typename T>
void split_channels(const Tensor<T>& src, int channels_a, Tensor<T>& a, Tensor<T>& b) {
  a = Tensor<T>({src.n(), channels_a, src.h(), src.w()});
  b = Tensor<T>({src.n(), src.c() - channels_a, src.h(), src.w()});
  const std::size_t la = a.shape().sample_size(), lb = b.shape().sample_size();
  for (int i = 0; i < src.n(); ++i) {
    std::copy_n(src.sample(i), la, a.sample(i));
    std::copy_n(src.sample(i) + la, lb, b.sample(i));
  }
}

}  // namespace aspectfsl::nn
