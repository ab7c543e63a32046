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

#include "aspectfsl/nn/tensor.hpp"

#include <mutex>
#include <new>
#include <unordered_map>
#include <vector>

namespace aspectfsl::nn {

namespace {

constexpr std::align_val_t kAlign{64};
constexpr std::size_t kMinCached = std::size_t{1} << 16;
constexpr std::size_t kMaxCacheBytes = std::size_t{1} << 30;

struct BlockCache {
  std::mutex mu;
  std::unordered_map<std::size_t, std::vector<void*>> free;
  std::size_t bytes = 0;

  void release() {
    std::lock_guard lock(mu);
    for (auto& [size, blocks] : free)
      for (void* p : blocks) ::operator delete(p, kAlign);
    free.clear();
    bytes = 0;
  }
};

// Never destroyed: tensors owned by other statics may be freed during exit.
BlockCache& cache() {
  static auto* c = new BlockCache;
  return *c;
}

}  // namespace

namespace detail {

void* tensor_alloc(std::size_t bytes) {
  if (bytes >= kMinCached) {
    auto& c = cache();
    std::lock_guard lock(c.mu);
    auto it = c.free.find(bytes);
    if (it != c.free.end() && !it->second.empty()) {
      void* p = it->second.back();
      it->second.pop_back();
      c.bytes -= bytes;
      return p;
    }
  }
  return ::operator new(bytes, kAlign);
}

void tensor_free(void* p, std::size_t bytes) noexcept {
  if (!p) return;
  if (bytes >= kMinCached) {
    auto& c = cache();
    std::lock_guard lock(c.mu);
    if (c.bytes + bytes <= kMaxCacheBytes) {
      try {
        c.free[bytes].push_back(p);
        c.bytes += bytes;
        return;
      } catch (...) {
      }
    }
  }
  ::operator delete(p, kAlign);
}

}  // namespace detail

void release_tensor_cache() { cache().release(); }

std::size_t tensor_cache_bytes() {
  auto& c = cache();
  std::lock_guard lock(c.mu);
  return c.bytes;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace aspectfsl::nn
