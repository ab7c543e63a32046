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

#include "aspectfsl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "aspectfsl/checkpoint.hpp"
#include "aspectfsl/error.hpp"
#include "aspectfsl/hash.hpp"
#include "aspectfsl/nn/optim.hpp"

namespace aspectfsl {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"optimizer", c.optimizer},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"episodes_per_epoch", c.episodes_per_epoch},
          {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.episodes_per_epoch = j.value("episodes_per_epoch", c.episodes_per_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (c.optimizer != "adamw" && c.optimizer != "adam")
    throw Error("unsupported optimizer '" + c.optimizer + "' (adamw)");
  if (c.epochs < 0 || c.batch_size < 1 || c.episodes_per_epoch < 1 || c.learning_rate <= 0)
    throw Error("invalid training configuration");
  return c;
}

namespace {

template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("embedding length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

/// log(1 + Σ exp(z_j)) and the softmax weights exp(z_j) / (1 + Σ exp(z)).
double log1p_sum_exp(std::span<const double> z, std::vector<double>* weights) {
  double m = 0;
  for (double v : z) m = std::max(m, v);
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  double loss;
  if (m == 0) {
    // 1 + s is exact for the all-equal case, giving log(N) exactly.
    loss = s < 0.5 ? std::log1p(s) : std::log(1.0 + s);
  } else {
    loss = m + std::log(std::exp(-m) + s);
  }
  if (weights) {
    const double denom = std::exp(-m) + s;
    weights->resize(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) (*weights)[j] = std::exp(z[j] - m) / denom;
  }
  return loss;
}

}  // namespace

template <typename T>
double tuplet_loss(std::span<const T> query, std::span<const T> positive,
                   std::span<const std::span<const T>> negatives) {
  if (negatives.empty()) throw Error("tuplet loss needs at least one negative");
  const double dp = squared_distance(query, positive);
  std::vector<double> z;
  for (const auto& n : negatives) z.push_back(dp - squared_distance(query, n));
  return log1p_sum_exp(z, nullptr);
}

template <typename T>
double episode_tuplet_loss(const T* rows, int support_size, int positive_index, std::size_t dim, T* grad,
                           double grad_scale) {
  if (positive_index < 0 || positive_index >= support_size) throw Error("positive index out of range");
  if (support_size < 2) throw Error("tuplet loss needs at least one negative");
  auto row = [&](int k) { return std::span<const T>(rows + static_cast<std::size_t>(k) * dim, dim); };
  const auto q = row(0);
  const auto p = row(1 + positive_index);
  const double dp = squared_distance(q, p);
  std::vector<double> z;
  std::vector<int> neg_rows;
  for (int i = 0; i < support_size; ++i) {
    if (i == positive_index) continue;
    z.push_back(dp - squared_distance(q, row(1 + i)));
    neg_rows.push_back(1 + i);
  }
  std::vector<double> w;
  const double loss = log1p_sum_exp(z, grad ? &w : nullptr);
  if (grad) {
    // dL/dz_j = w_j; z_j = ‖q−p‖² − ‖q−n_j‖².
    double wsum = 0;
    for (double v : w) wsum += v;
    T* gq = grad;
    T* gp = grad + static_cast<std::size_t>(1 + positive_index) * dim;
    for (std::size_t e = 0; e < dim; ++e) {
      const double d = static_cast<double>(q[e]) - p[e];
      gq[e] += static_cast<T>(grad_scale * 2 * wsum * d);
      gp[e] -= static_cast<T>(grad_scale * 2 * wsum * d);
    }
    for (std::size_t j = 0; j < neg_rows.size(); ++j) {
      T* gn = grad + static_cast<std::size_t>(neg_rows[j]) * dim;
      const auto n = row(neg_rows[j]);
      for (std::size_t e = 0; e < dim; ++e) {
        const double d = static_cast<double>(q[e]) - n[e];
        gq[e] -= static_cast<T>(grad_scale * 2 * w[j] * d);
        gn[e] += static_cast<T>(grad_scale * 2 * w[j] * d);
      }
    }
  }
  return loss;
}

template <typename T>
Tensor<T> assemble_images(const ImageSet& images, std::span<const Episode> episodes) {
  if (episodes.empty()) throw Error("no episodes to assemble");
  const int n = static_cast<int>(episodes.front().support_ids.size());
  const int s = images.image_size();
  Tensor<T> batch({static_cast<int>(episodes.size()) * (n + 1), 3, s, s});
  int k = 0;
  auto put = [&](const std::string& id) {
    const auto src = images.image(id);
    std::copy(src.begin(), src.end(), batch.sample(k++));
  };
  for (const auto& e : episodes) {
    if (static_cast<int>(e.support_ids.size()) != n) throw Error("episodes in one batch differ in support size");
    put(e.query_id);
    for (const auto& id : e.support_ids) put(id);
  }
  return batch;
}

template double tuplet_loss<float>(std::span<const float>, std::span<const float>,
                                   std::span<const std::span<const float>>);
template double tuplet_loss<double>(std::span<const double>, std::span<const double>,
                                    std::span<const std::span<const double>>);
template double episode_tuplet_loss<float>(const float*, int, int, std::size_t, float*, double);
template double episode_tuplet_loss<double>(const double*, int, int, std::size_t, double*, double);
template Tensor<float> assemble_images<float>(const ImageSet&, std::span<const Episode>);
template Tensor<double> assemble_images<double>(const ImageSet&, std::span<const Episode>);

double evaluate_loss(AspectModel<float>& model, const ImageSet& images, std::span<const Episode> episodes,
                     int batch_size) {
  if (episodes.empty()) return 0;
  double total = 0;
  for (std::size_t b = 0; b < episodes.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto chunk = episodes.subspan(b, std::min<std::size_t>(static_cast<std::size_t>(batch_size), episodes.size() - b));
    const int n = static_cast<int>(chunk.front().support_ids.size());
    const Tensor<float> emb = model.forward(assemble_images<float>(images, chunk), n, Mode::kEval);
    const std::size_t dim = emb.shape().sample_size();
    for (std::size_t i = 0; i < chunk.size(); ++i)
      total += episode_tuplet_loss(emb.sample(static_cast<int>(i) * (n + 1)), n, chunk[i].positive_index, dim);
  }
  return total / static_cast<double>(episodes.size());
}

std::string training_config_hash(const ModelConfig& model, const TrainConfig& train, const std::string& manifest_hash) {
  return hash_json({{"model", model_config_to_json(model)},
                    {"train", train_config_to_json(train)},
                    {"manifest_hash", manifest_hash}});
}

namespace {

Checkpoint make_checkpoint(AspectModel<float>& model, nn::AdamW<float>* optimizer, const nlohmann::json& meta) {
  Checkpoint ck;
  ck.meta = meta;
  ck.arrays = export_arrays(model.parameters());
  if (optimizer) {
    auto state = export_arrays(optimizer->state());
    ck.arrays.insert(ck.arrays.end(), state.begin(), state.end());
  }
  return ck;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, std::span<const Episode> train_episodes,
                  std::span<const Episode> val_episodes, const ImageSet& images, const std::filesystem::path& run_dir,
                  const TrainOptions& options) {
  if (train_episodes.empty()) throw Error("training needs at least one training episode");
  if (val_episodes.empty()) throw Error("training needs at least one validation episode");

  AspectModel<float> model(model_config, config.seed);
  auto params = model.parameters();
  nn::AdamW<float> optimizer(params, {config.learning_rate, config.beta1, config.beta2, config.eps, config.weight_decay});

  TrainResult result;
  result.best_checkpoint = run_dir / "checkpoints" / "best.ckpt";
  result.last_checkpoint = run_dir / "checkpoints" / "last.ckpt";
  result.log_file = run_dir / "logs" / "train_log.csv";
  std::filesystem::create_directories(run_dir / "checkpoints");
  std::filesystem::create_directories(run_dir / "logs");

  const std::string cfg_hash = training_config_hash(model_config, config, options.manifest_hash);
  int start_epoch = 1;
  double best_val = std::numeric_limits<double>::infinity();
  if (options.resume) {
    const Checkpoint last = load_checkpoint(result.last_checkpoint);
    if (model_config_from_json(last.meta.at("model_config")) != model_config)
      throw Error("cannot resume: model config differs from " + result.last_checkpoint.string());
    import_arrays(last, params);
    import_arrays(last, optimizer.state());
    optimizer.set_steps(last.meta.at("adam_steps").get<std::int64_t>());
    start_epoch = last.meta.at("epoch").get<int>() + 1;
    best_val = last.meta.at("best_val_loss").get<double>();
  }
  result.first_epoch = start_epoch;
  result.best_val_loss = best_val;

  std::ofstream log(result.log_file, options.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + result.log_file.string());
  if (!options.resume) {
    log << "# config_hash=" << cfg_hash << " episodes_per_epoch=" << config.episodes_per_epoch
        << " batch_size=" << config.batch_size << " learning_rate=" << config.learning_rate
        << " weight_decay=" << config.weight_decay << " epochs=" << config.epochs << " seed=" << config.seed << "\n";
    log << "epoch,train_loss,val_loss,wallclock\n";
    log.flush();
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = start_epoch; epoch <= config.epochs; ++epoch) {
    // Epoch order: concatenated seeded permutations of the training episodes.
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order;
    while (order.size() < config.episodes_per_epoch) {
      std::vector<std::size_t> perm(train_episodes.size());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
      order.insert(order.end(), perm.begin(), perm.end());
    }
    order.resize(config.episodes_per_epoch);

    double epoch_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      std::vector<Episode> chunk;
      for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) chunk.push_back(train_episodes[order[i]]);
      const int n = static_cast<int>(chunk.front().support_ids.size());
      optimizer.zero_grad();
      const Tensor<float> emb = model.forward(assemble_images<float>(images, chunk), n, Mode::kTrain);
      const std::size_t dim = emb.shape().sample_size();
      Tensor<float> grad(emb.shape());
      const double scale = 1.0 / static_cast<double>(chunk.size());
      double batch_loss = 0;
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const int row = static_cast<int>(i) * (n + 1);
        const double l = episode_tuplet_loss(emb.sample(row), n, chunk[i].positive_index, dim, grad.sample(row), scale);
        if (!std::isfinite(l))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", episode " +
                              std::to_string(order[b + i]) + " (query " + chunk[i].query_id + ")");
        batch_loss += l;
      }
      model.backward(grad);
      optimizer.step();
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(order.size());
    const double val_loss = evaluate_loss(model, images, val_episodes, config.batch_size);
    if (!std::isfinite(val_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));

    const bool improved = val_loss < best_val;
    if (improved) best_val = val_loss;
    nlohmann::json meta{{"format", "aspectfsl.checkpoint/1"},
                        {"model_config", model_config_to_json(model_config)},
                        {"train_config", train_config_to_json(config)},
                        {"epoch", epoch},
                        {"val_loss", val_loss},
                        {"best_val_loss", best_val},
                        {"manifest_hash", options.manifest_hash},
                        {"config_hash", cfg_hash},
                        {"adam_steps", optimizer.steps()}};
    if (improved) save_checkpoint(result.best_checkpoint, make_checkpoint(model, nullptr, meta));
    save_checkpoint(result.last_checkpoint, make_checkpoint(model, &optimizer, meta));

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << epoch << ',' << format_double(epoch_loss) << ',' << format_double(val_loss) << ',' << format_double(wall)
        << "\n";
    log.flush();
    result.train_losses.push_back(epoch_loss);
    result.val_losses.push_back(val_loss);
    result.last_epoch = epoch;
    result.last_val_loss = val_loss;
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss, val_loss);
  }
  result.best_val_loss = best_val;
  return result;
}

AspectModel<float> load_model(const std::filesystem::path& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (!ck.meta.contains("model_config")) throw IoError(checkpoint_path.string() + ": checkpoint has no model config");
  AspectModel<float> model(model_config_from_json(ck.meta["model_config"]), 0);
  import_arrays(ck, model.parameters());
  return model;
}

}  // namespace aspectfsl
