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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectfsl/nn/layers.hpp"
#include "aspectfsl/nn/tensor.hpp"

namespace aspectfsl {

using nn::Mode;
using nn::Shape4;
using nn::Tensor;

enum class Backbone { kShallow, kVggSmall, kResNetSmall };
enum class DstmBlock { kSingleLayer, kResidualBlock };
/// The permutation-invariant set operation.
enum class SetPooling { kMean, kSum, kMax };

struct ModelConfig {
  Backbone backbone = Backbone::kShallow;
  DstmBlock dstm_block = DstmBlock::kSingleLayer;
  /// false: baseline that compares flattened backbone features directly.
  bool use_dstm = true;
  /// One width for shallow, three stage widths for vgg_small / resnet_small.
  std::vector<int> backbone_channels{64};
  int dstm_channels = 64;
  int mask_channels = 64;
  int mask_size = 14;
  int image_size = 112;
  SetPooling pooling = SetPooling::kMean;

  static ModelConfig defaults(Backbone backbone);
  /// Throws ShapeError when the stages cannot line up.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
std::string to_string(Backbone b);
std::string to_string(DstmBlock b);
std::string to_string(SetPooling p);

struct StageShape {
  std::string stage;
  std::string layers;
  Shape4 shape;
};

/// Per-sample (n = 1) output shape of every pipeline stage.
std::vector<StageShape> shape_table(const ModelConfig& config);
std::string format_shape_table(const ModelConfig& config);

/// Permutation-invariant set operations over consecutive groups of `group`
/// samples. Exposed for testing; the model composes them.
namespace dstm {

/// out_i = pool over j ≠ i (same group) of x_j.
template <typename T>
Tensor<T> neighbor_pool(const Tensor<T>& x, int group, SetPooling pooling);
template <typename T>
Tensor<T> neighbor_pool_backward(const Tensor<T>& x, const Tensor<T>& grad, int group, SetPooling pooling);

/// out_b = pool over the group b of x.
template <typename T>
Tensor<T> set_pool(const Tensor<T>& x, int group, SetPooling pooling);
template <typename T>
Tensor<T> set_pool_backward(const Tensor<T>& x, const Tensor<T>& grad, int group, SetPooling pooling);

/// Softmax over the channel axis at every spatial position.
template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x);
template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& softmax_out, const Tensor<T>& grad);

/// out_k = mask_{k / group} ⊙ feats_k. Throws ShapeError on mismatched extents.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& mask, const Tensor<T>& feats, int group);
template <typename T>
void apply_mask_backward(const Tensor<T>& mask, const Tensor<T>& feats, const Tensor<T>& grad, int group,
                         Tensor<T>& grad_mask, Tensor<T>& grad_feats);

}  // namespace dstm

/// Backbone plus Deep Set Traversal Module.
///
/// Episode batches are laid out as consecutive groups of `support_size + 1`
/// images: the query first, then the support elements in order. The mask of
/// an episode is computed from its support elements only and multiplies the
/// reshaped features of the query and of every support element.
template <typename T>
class AspectModel {
 public:
  AspectModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  Tensor<T> embed_backbone(const Tensor<T>& images, Mode mode);
  /// Support features of whole episodes ([B·N, C, h, w]) → P_N(i) for every i.
  Tensor<T> neighbor_union(const Tensor<T>& support_feats, int support_size, Mode mode);
  /// h_i = f_θ(concat(feat_i, P_N(i))).
  Tensor<T> equivariant_step(const Tensor<T>& support_feats, int support_size, Mode mode);
  /// softmax_c(resize(f_λ(pool_i h_i))), one mask per episode.
  Tensor<T> invariant_pool(const Tensor<T>& h, int support_size, Mode mode);
  /// 1×1 projection plus average-pool resize to the mask extents.
  Tensor<T> reshape(const Tensor<T>& feats, Mode mode);

  /// Images [B·(N+1), 3, S, S] → embeddings [B·(N+1), C′, m, m] (DSTM) or
  /// backbone features (baseline). Caches everything backward needs.
  Tensor<T> forward(const Tensor<T>& images, int support_size, Mode mode);
  /// Gradient w.r.t. the embeddings returned by the last forward.
  void backward(const Tensor<T>& grad_embeddings);

  /// Mask from the last forward ([B, C′, m, m]); empty for the baseline.
  const Tensor<T>& last_mask() const { return mask_; }
  const Tensor<T>& last_equivariant() const { return h_; }

  /// Parameters and buffers with stable dotted names.
  std::vector<nn::ParamRef<T>> parameters();
  std::size_t embedding_size() const;

 private:
  ModelConfig config_;
  nn::Sequential<T> backbone_;
  nn::Sequential<T> phi_, theta_, lambda_, reshaper_;
  int support_size_ = 0;
  Tensor<T> feats_, support_feats_, phi_out_, h_, pooled_h_, mask_, reshaped_;
  std::vector<int> support_rows_;
};

}  // namespace aspectfsl
