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

#include <cstdint>
#include <vector>

#include "aspectfsl/nn/layers.hpp"

namespace aspectfsl::nn {

struct AdamOptions {
  double learning_rate = 7e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style): p ← p − lr·wd·p, applied alongside the Adam step.
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay over the trainable entries of `params`.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<ParamRef<T>> params, AdamOptions options);

  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

  /// Moment estimates, one pair per trainable parameter, for checkpointing.
  std::vector<ParamRef<T>> state();
  void set_steps(std::int64_t steps) { step_ = steps; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

}  // namespace aspectfsl::nn
