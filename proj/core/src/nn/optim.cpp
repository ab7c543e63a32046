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

#include "aspectfsl/nn/optim.hpp"

#include <cmath>

namespace aspectfsl::nn {

template <typename T>
AdamW<T>::AdamW(std::vector<ParamRef<T>> params, AdamOptions options) : options_(options) {
  for (auto& p : params) {
    if (!p.grad) continue;
    params_.push_back(p);
    m_.emplace_back(p.value->shape());
    v_.emplace_back(p.value->shape());
  }
}

template <typename T>
void AdamW<T>::step() {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = options_.learning_rate;
  const double decay = 1.0 - lr * options_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    T* w = params_[k].value->data();
    const T* g = params_[k].grad->data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    for (std::size_t i = 0; i < params_[k].value->size(); ++i) {
      m[i] = static_cast<T>(b1 * m[i] + (1 - b1) * g[i]);
      v[i] = static_cast<T>(b2 * v[i] + (1 - b2) * static_cast<double>(g[i]) * g[i]);
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      w[i] = static_cast<T>(w[i] * decay - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.grad->fill(T(0));
}

template <typename T>
std::vector<ParamRef<T>> AdamW<T>::state() {
  std::vector<ParamRef<T>> out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"adam.m." + params_[k].name, &m_[k], nullptr});
    out.push_back({"adam.v." + params_[k].name, &v_[k], nullptr});
  }
  return out;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace aspectfsl::nn
