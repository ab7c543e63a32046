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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/episodes.hpp"
#include "aspectfsl/manifest.hpp"
#include "aspectfsl/model.hpp"

namespace aspectfsl {

struct TrainConfig {
  double learning_rate = 7e-4;
  double weight_decay = 1e-2;
  int epochs = 50;
  std::string optimizer = "adamw";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t episodes_per_epoch = 2000;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// log(1 + Σ_j exp(‖q−p‖² − ‖q−n_j‖²)), evaluated without overflow.
template <typename T>
double tuplet_loss(std::span<const T> query, std::span<const T> positive,
                   std::span<const std::span<const T>> negatives);

/// Tuplet loss of one episode whose embeddings are `rows` (query first, then
/// `support_size` support rows of length `dim`). When `grad` is non-null it
/// receives dL/d(rows), scaled by `grad_scale`.
template <typename T>
double episode_tuplet_loss(const T* rows, int support_size, int positive_index, std::size_t dim, T* grad = nullptr,
                           double grad_scale = 1.0);

/// Stacks query + support images of `episodes` into one batch.
template <typename T>
Tensor<T> assemble_images(const ImageSet& images, std::span<const Episode> episodes);

/// Mean tuplet loss over `episodes` in inference mode.
double evaluate_loss(AspectModel<float>& model, const ImageSet& images, std::span<const Episode> episodes,
                     int batch_size);

struct TrainOptions {
  /// Resume from `<run_dir>/checkpoints/last.ckpt`.
  bool resume = false;
  std::string manifest_hash;
  /// Called after every epoch with (epoch, train_loss, val_loss).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainResult {
  int first_epoch = 1;
  int last_epoch = 0;
  double best_val_loss = 0;
  double last_val_loss = 0;
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log_file;
};

/// Episodic training with the tuplet loss. Writes
/// `<run_dir>/checkpoints/{best,last}.ckpt` and `<run_dir>/logs/train_log.csv`.
/// Epochs are numbered from 1; a resumed run continues the numbering up to
/// `train_config.epochs`. Throws TrainingError on a non-finite loss.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  std::span<const Episode> train_episodes, std::span<const Episode> val_episodes,
                  const ImageSet& images, const std::filesystem::path& run_dir, const TrainOptions& options = {});

/// Loads model weights from a checkpoint written by `train`.
AspectModel<float> load_model(const std::filesystem::path& checkpoint_path);

/// Hash stamped into checkpoints: model config, train config and dataset.
std::string training_config_hash(const ModelConfig& model, const TrainConfig& train, const std::string& manifest_hash);

}  // namespace aspectfsl
