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

#include "aspectfsl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "aspectfsl/error.hpp"

namespace aspectfsl {

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw Error(std::string("unknown ") + what + " '" + s + "'");
}

int backbone_downsampling(Backbone b) { return b == Backbone::kShallow ? 4 : 8; }

}  // namespace

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::kShallow: return "shallow";
    case Backbone::kVggSmall: return "vgg_small";
    case Backbone::kResNetSmall: return "resnet_small";
  }
  return "?";
}

std::string to_string(DstmBlock b) { return b == DstmBlock::kSingleLayer ? "single_layer" : "residual_block"; }

std::string to_string(SetPooling p) {
  switch (p) {
    case SetPooling::kMean: return "mean";
    case SetPooling::kSum: return "sum";
    case SetPooling::kMax: return "max";
  }
  return "?";
}

ModelConfig ModelConfig::defaults(Backbone backbone) {
  ModelConfig c;
  c.backbone = backbone;
  c.backbone_channels = backbone == Backbone::kShallow ? std::vector<int>{64} : std::vector<int>{64, 128, 256};
  c.dstm_block = backbone == Backbone::kShallow ? DstmBlock::kSingleLayer : DstmBlock::kResidualBlock;
  return c;
}

void ModelConfig::validate() const {
  const std::size_t want = backbone == Backbone::kShallow ? 1 : 3;
  if (backbone_channels.size() != want)
    throw ShapeError(to_string(backbone) + " backbone needs " + std::to_string(want) + " channel width(s)");
  for (int c : backbone_channels)
    if (c <= 0) throw ShapeError("backbone channel widths must be positive");
  if (dstm_channels <= 0 || mask_channels <= 0 || mask_size <= 0) throw ShapeError("DSTM sizes must be positive");
  const int down = backbone_downsampling(backbone);
  if (image_size <= 0 || image_size % down != 0)
    throw ShapeError("image size " + std::to_string(image_size) + " not divisible by " + std::to_string(down));
  const int feature = image_size / down;
  if (use_dstm && feature % mask_size != 0)
    throw ShapeError("reshaper cannot align " + std::to_string(feature) + "x" + std::to_string(feature) +
                     " features to a " + std::to_string(mask_size) + "x" + std::to_string(mask_size) + " mask");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.backbone)},
          {"dstm_block", to_string(c.dstm_block)},
          {"use_dstm", c.use_dstm},
          {"backbone_channels", c.backbone_channels},
          {"dstm_channels", c.dstm_channels},
          {"mask_channels", c.mask_channels},
          {"mask_size", c.mask_size},
          {"image_size", c.image_size},
          {"pooling", to_string(c.pooling)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  const Backbone b = parse_enum<Backbone>(
      j.value("backbone", "shallow"),
      {{"shallow", Backbone::kShallow}, {"vgg_small", Backbone::kVggSmall}, {"resnet_small", Backbone::kResNetSmall}},
      "backbone");
  ModelConfig c = ModelConfig::defaults(b);
  if (j.contains("dstm_block"))
    c.dstm_block = parse_enum<DstmBlock>(
        j["dstm_block"].get<std::string>(),
        {{"single_layer", DstmBlock::kSingleLayer}, {"residual_block", DstmBlock::kResidualBlock}}, "dstm_block");
  c.use_dstm = j.value("use_dstm", c.use_dstm);
  c.backbone_channels = j.value("backbone_channels", c.backbone_channels);
  c.dstm_channels = j.value("dstm_channels", c.dstm_channels);
  c.mask_channels = j.value("mask_channels", c.mask_channels);
  c.mask_size = j.value("mask_size", c.mask_size);
  c.image_size = j.value("image_size", c.image_size);
  if (j.contains("pooling"))
    c.pooling = parse_enum<SetPooling>(
        j["pooling"].get<std::string>(),
        {{"mean", SetPooling::kMean}, {"sum", SetPooling::kSum}, {"max", SetPooling::kMax}}, "pooling");
  c.validate();
  return c;
}

// ------------------------------------------------------------ set ops

namespace dstm {

namespace {

template <typename T>
void check_group(const Tensor<T>& x, int group) {
  if (group < 1 || x.n() % group != 0)
    throw ShapeError("batch of " + std::to_string(x.n()) + " is not a multiple of group size " +
                     std::to_string(group));
}

}  // namespace

template <typename T>
Tensor<T> neighbor_pool(const Tensor<T>& x, int group, SetPooling pooling) {
  check_group(x, group);
  if (group < 2) throw ShapeError("neighbor union needs a support set of at least 2 elements");
  Tensor<T> out(x.shape());
  const std::size_t len = x.shape().sample_size();
  for (int g0 = 0; g0 < x.n(); g0 += group) {
    for (int i = 0; i < group; ++i) {
      T* o = out.sample(g0 + i);
      bool first = true;
      for (int j = 0; j < group; ++j) {
        if (j == i) continue;
        const T* s = x.sample(g0 + j);
        for (std::size_t e = 0; e < len; ++e) {
          if (pooling == SetPooling::kMax)
            o[e] = first ? s[e] : std::max(o[e], s[e]);
          else
            o[e] += s[e];
        }
        first = false;
      }
      if (pooling == SetPooling::kMean) {
        const T scale = T(1) / static_cast<T>(group - 1);
        for (std::size_t e = 0; e < len; ++e) o[e] *= scale;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> neighbor_pool_backward(const Tensor<T>& x, const Tensor<T>& grad, int group, SetPooling pooling) {
  check_group(x, group);
  Tensor<T> dx(x.shape());
  const std::size_t len = x.shape().sample_size();
  const T scale = pooling == SetPooling::kMean ? T(1) / static_cast<T>(group - 1) : T(1);
  for (int g0 = 0; g0 < x.n(); g0 += group) {
    for (int i = 0; i < group; ++i) {
      const T* g = grad.sample(g0 + i);
      if (pooling == SetPooling::kMax) {
        for (std::size_t e = 0; e < len; ++e) {
          int best = -1;
          for (int j = 0; j < group; ++j) {
            if (j == i) continue;
            if (best < 0 || x.sample(g0 + j)[e] > x.sample(g0 + best)[e]) best = j;
          }
          dx.sample(g0 + best)[e] += g[e];
        }
      } else {
        for (int j = 0; j < group; ++j) {
          if (j == i) continue;
          T* d = dx.sample(g0 + j);
          for (std::size_t e = 0; e < len; ++e) d[e] += g[e] * scale;
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> set_pool(const Tensor<T>& x, int group, SetPooling pooling) {
  check_group(x, group);
  Shape4 s = x.shape();
  s.n = x.n() / group;
  Tensor<T> out(s);
  const std::size_t len = s.sample_size();
  for (int b = 0; b < s.n; ++b) {
    T* o = out.sample(b);
    for (int j = 0; j < group; ++j) {
      const T* in = x.sample(b * group + j);
      for (std::size_t e = 0; e < len; ++e) {
        if (pooling == SetPooling::kMax)
          o[e] = j == 0 ? in[e] : std::max(o[e], in[e]);
        else
          o[e] += in[e];
      }
    }
    if (pooling == SetPooling::kMean) {
      const T scale = T(1) / static_cast<T>(group);
      for (std::size_t e = 0; e < len; ++e) o[e] *= scale;
    }
  }
  return out;
}

template <typename T>
Tensor<T> set_pool_backward(const Tensor<T>& x, const Tensor<T>& grad, int group, SetPooling pooling) {
  check_group(x, group);
  Tensor<T> dx(x.shape());
  const std::size_t len = x.shape().sample_size();
  const T scale = pooling == SetPooling::kMean ? T(1) / static_cast<T>(group) : T(1);
  for (int b = 0; b < grad.n(); ++b) {
    const T* g = grad.sample(b);
    if (pooling == SetPooling::kMax) {
      for (std::size_t e = 0; e < len; ++e) {
        int best = 0;
        for (int j = 1; j < group; ++j)
          if (x.sample(b * group + j)[e] > x.sample(b * group + best)[e]) best = j;
        dx.sample(b * group + best)[e] += g[e];
      }
    } else {
      for (int j = 0; j < group; ++j) {
        T* d = dx.sample(b * group + j);
        for (std::size_t e = 0; e < len; ++e) d[e] = g[e] * scale;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const T* in = x.sample(n);
    T* out = y.sample(n);
    for (std::size_t p = 0; p < plane; ++p) {
      T m = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < x.c(); ++c) m = std::max(m, in[c * plane + p]);
      T sum = 0;
      for (int c = 0; c < x.c(); ++c) {
        out[c * plane + p] = std::exp(in[c * plane + p] - m);
        sum += out[c * plane + p];
      }
      for (int c = 0; c < x.c(); ++c) out[c * plane + p] /= sum;
    }
  }
  return y;
}

template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& y, const Tensor<T>& grad) {
  Tensor<T> dx(y.shape());
  const std::size_t plane = y.shape().plane();
  for (int n = 0; n < y.n(); ++n) {
    const T* s = y.sample(n);
    const T* g = grad.sample(n);
    T* d = dx.sample(n);
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int c = 0; c < y.c(); ++c) dot += s[c * plane + p] * g[c * plane + p];
      for (int c = 0; c < y.c(); ++c) d[c * plane + p] = s[c * plane + p] * (g[c * plane + p] - dot);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& mask, const Tensor<T>& feats, int group) {
  const Shape4 ms = mask.shape(), fs = feats.shape();
  if (ms.c != fs.c || ms.h != fs.h || ms.w != fs.w || fs.n != ms.n * group)
    throw ShapeError("mask " + ms.str() + " does not fit reshaped features " + fs.str());
  Tensor<T> out(fs);
  const std::size_t len = fs.sample_size();
  for (int k = 0; k < fs.n; ++k) {
    const T* m = mask.sample(k / group);
    const T* f = feats.sample(k);
    T* o = out.sample(k);
    for (std::size_t e = 0; e < len; ++e) o[e] = m[e] * f[e];
  }
  return out;
}

template <typename T>
void apply_mask_backward(const Tensor<T>& mask, const Tensor<T>& feats, const Tensor<T>& grad, int group,
                         Tensor<T>& grad_mask, Tensor<T>& grad_feats) {
  grad_mask = Tensor<T>(mask.shape());
  grad_feats = Tensor<T>(feats.shape());
  const std::size_t len = feats.shape().sample_size();
  for (int k = 0; k < feats.n(); ++k) {
    const T* m = mask.sample(k / group);
    const T* f = feats.sample(k);
    const T* g = grad.sample(k);
    T* dm = grad_mask.sample(k / group);
    T* df = grad_feats.sample(k);
    for (std::size_t e = 0; e < len; ++e) {
      df[e] = m[e] * g[e];
      dm[e] += f[e] * g[e];
    }
  }
}

#define AFSL_INSTANTIATE(T)                                                                              \
  template Tensor<T> neighbor_pool<T>(const Tensor<T>&, int, SetPooling);                                \
  template Tensor<T> neighbor_pool_backward<T>(const Tensor<T>&, const Tensor<T>&, int, SetPooling);     \
  template Tensor<T> set_pool<T>(const Tensor<T>&, int, SetPooling);                                     \
  template Tensor<T> set_pool_backward<T>(const Tensor<T>&, const Tensor<T>&, int, SetPooling);          \
  template Tensor<T> channel_softmax<T>(const Tensor<T>&);                                               \
  template Tensor<T> channel_softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> apply_mask<T>(const Tensor<T>&, const Tensor<T>&, int);                             \
  template void apply_mask_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, Tensor<T>&, \
                                       Tensor<T>&);
AFSL_INSTANTIATE(float)
AFSL_INSTANTIATE(double)
#undef AFSL_INSTANTIATE

}  // namespace dstm

// ------------------------------------------------------------ model

namespace {

template <typename T>
void add_block(nn::Sequential<T>& seq, DstmBlock block, int in, int out) {
  if (block == DstmBlock::kSingleLayer)
    seq.add(nn::conv_bn_relu<T>(in, out));
  else
    seq.template emplace<nn::ResidualBlock<T>>(in, out, 1);
}

}  // namespace

template <typename T>
AspectModel<T>::AspectModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& ch = config_.backbone_channels;
  switch (config_.backbone) {
    case Backbone::kShallow:
      backbone_.add(nn::conv_bn_relu<T>(3, ch[0]));
      backbone_.template emplace<nn::MaxPool2d<T>>(4);
      break;
    case Backbone::kVggSmall: {
      int prev = 3;
      for (int c : ch) {
        backbone_.add(nn::conv_bn_relu<T>(prev, c));
        backbone_.template emplace<nn::MaxPool2d<T>>(2);
        prev = c;
      }
      break;
    }
    case Backbone::kResNetSmall:
      backbone_.add(nn::conv_bn_relu<T>(3, ch[0], 2));
      backbone_.template emplace<nn::MaxPool2d<T>>(2);
      backbone_.template emplace<nn::ResidualBlock<T>>(ch[0], ch[0], 1);
      backbone_.template emplace<nn::ResidualBlock<T>>(ch[0], ch[1], 2);
      backbone_.template emplace<nn::ResidualBlock<T>>(ch[1], ch[2], 1);
      break;
  }
  backbone_.set_input_grad(false);

  std::mt19937_64 rng(seed);
  backbone_.init(rng);
  if (!config_.use_dstm) return;

  const int c = ch.back();
  const int feature = config_.image_size / backbone_downsampling(config_.backbone);
  const int resize = feature / config_.mask_size;
  add_block(phi_, config_.dstm_block, c, config_.dstm_channels);
  add_block(theta_, config_.dstm_block, c + config_.dstm_channels, config_.dstm_channels);
  add_block(lambda_, config_.dstm_block, config_.dstm_channels, config_.mask_channels);
  reshaper_.template emplace<nn::Conv2d<T>>(c, config_.mask_channels, 1, 1, 0, false);
  if (resize > 1) {
    lambda_.template emplace<nn::AvgPool2d<T>>(resize);
    reshaper_.template emplace<nn::AvgPool2d<T>>(resize);
  }
  phi_.init(rng);
  theta_.init(rng);
  lambda_.init(rng);
  reshaper_.init(rng);
}

template <typename T>
Tensor<T> AspectModel<T>::embed_backbone(const Tensor<T>& images, Mode mode) {
  const int s = config_.image_size;
  if (images.c() != 3 || images.h() != s || images.w() != s)
    throw ShapeError("backbone expects Bx3x" + std::to_string(s) + "x" + std::to_string(s) + " images, got " +
                     images.shape().str());
  return backbone_.forward(images, mode);
}

template <typename T>
Tensor<T> AspectModel<T>::neighbor_union(const Tensor<T>& support_feats, int support_size, Mode mode) {
  if (!config_.use_dstm) throw Error("baseline model has no DSTM");
  if (support_size < 2) throw ShapeError("neighbor union needs a support set of at least 2 elements");
  phi_out_ = phi_.forward(support_feats, mode);
  return dstm::neighbor_pool(phi_out_, support_size, config_.pooling);
}

template <typename T>
Tensor<T> AspectModel<T>::equivariant_step(const Tensor<T>& support_feats, int support_size, Mode mode) {
  const Tensor<T> unions = neighbor_union(support_feats, support_size, mode);
  h_ = theta_.forward(nn::concat_channels(support_feats, unions), mode);
  return h_;
}

template <typename T>
Tensor<T> AspectModel<T>::invariant_pool(const Tensor<T>& h, int support_size, Mode mode) {
  if (!config_.use_dstm) throw Error("baseline model has no DSTM");
  if (h.n() == 0) throw ShapeError("invariant pooling of an empty set");
  pooled_h_ = dstm::set_pool(h, support_size, config_.pooling);
  mask_ = dstm::channel_softmax(lambda_.forward(pooled_h_, mode));
  return mask_;
}

template <typename T>
Tensor<T> AspectModel<T>::reshape(const Tensor<T>& feats, Mode mode) {
  if (!config_.use_dstm) throw Error("baseline model has no reshaper");
  return reshaper_.forward(feats, mode);
}

template <typename T>
Tensor<T> AspectModel<T>::forward(const Tensor<T>& images, int support_size, Mode mode) {
  const int group = support_size + 1;
  if (support_size < 1 || images.n() % group != 0)
    throw ShapeError("image batch of " + std::to_string(images.n()) + " is not a whole number of episodes");
  support_size_ = support_size;
  feats_ = embed_backbone(images, mode);
  if (!config_.use_dstm) return feats_;

  support_rows_.clear();
  for (int k = 0; k < images.n(); ++k)
    if (k % group != 0) support_rows_.push_back(k);
  support_feats_ = nn::gather_samples(feats_, support_rows_);
  equivariant_step(support_feats_, support_size, mode);
  invariant_pool(h_, support_size, mode);
  reshaped_ = reshape(feats_, mode);
  return dstm::apply_mask(mask_, reshaped_, group);
}

template <typename T>
void AspectModel<T>::backward(const Tensor<T>& grad) {
  if (!config_.use_dstm) {
    backbone_.backward(grad);
    return;
  }
  const int n = support_size_;
  Tensor<T> grad_mask, grad_reshaped;
  dstm::apply_mask_backward(mask_, reshaped_, grad, n + 1, grad_mask, grad_reshaped);
  Tensor<T> grad_feats = reshaper_.backward(grad_reshaped);

  const Tensor<T> grad_logits = dstm::channel_softmax_backward(mask_, grad_mask);
  const Tensor<T> grad_pooled = lambda_.backward(grad_logits);
  const Tensor<T> grad_h = dstm::set_pool_backward(h_, grad_pooled, n, config_.pooling);
  const Tensor<T> grad_concat = theta_.backward(grad_h);
  Tensor<T> grad_support, grad_union;
  nn::split_channels(grad_concat, support_feats_.c(), grad_support, grad_union);
  const Tensor<T> grad_phi = dstm::neighbor_pool_backward(phi_out_, grad_union, n, config_.pooling);
  grad_support += phi_.backward(grad_phi);
  nn::scatter_add_samples(grad_support, support_rows_, grad_feats);
  backbone_.backward(grad_feats);
}

template <typename T>
std::vector<nn::ParamRef<T>> AspectModel<T>::parameters() {
  std::vector<nn::ParamRef<T>> out;
  backbone_.collect("backbone.", out);
  if (config_.use_dstm) {
    phi_.collect("dstm.phi.", out);
    theta_.collect("dstm.theta.", out);
    lambda_.collect("dstm.lambda.", out);
    reshaper_.collect("reshaper.", out);
  }
  return out;
}

template <typename T>
std::size_t AspectModel<T>::embedding_size() const {
  const Shape4 in{1, 3, config_.image_size, config_.image_size};
  const Shape4 f = backbone_.output_shape(in);
  return config_.use_dstm ? reshaper_.output_shape(f).sample_size() : f.sample_size();
}

template class AspectModel<float>;
template class AspectModel<double>;

std::vector<StageShape> shape_table(const ModelConfig& config) {
  AspectModel<float> model(config, 0);
  std::vector<StageShape> rows;
  const Shape4 in{1, 3, config.image_size, config.image_size};
  rows.push_back({"input", "RGB image", in});
  // Run one tiny forward to obtain actual shapes rather than re-deriving them.
  Tensor<float> images({3, 3, config.image_size, config.image_size});
  const Tensor<float> feats = model.embed_backbone(images, Mode::kEval);
  rows.push_back({"backbone", to_string(config.backbone), {1, feats.c(), feats.h(), feats.w()}});
  if (!config.use_dstm) {
    rows.push_back({"embedding", "flattened backbone features", {1, static_cast<int>(feats.shape().sample_size()), 1, 1}});
    return rows;
  }
  const Tensor<float> support = nn::gather_samples(feats, std::vector<int>{1, 2});
  const Tensor<float> unions = model.neighbor_union(support, 2, Mode::kEval);
  rows.push_back({"neighbor union", "f_phi then " + to_string(config.pooling) + " over j != i",
                  {1, unions.c(), unions.h(), unions.w()}});
  rows.push_back({"concat", "feature ++ neighbor union", {1, feats.c() + unions.c(), feats.h(), feats.w()}});
  const Tensor<float> h = model.equivariant_step(support, 2, Mode::kEval);
  rows.push_back({"equivariant h_i", "f_theta (" + to_string(config.dstm_block) + ")", {1, h.c(), h.h(), h.w()}});
  const Tensor<float> mask = model.invariant_pool(h, 2, Mode::kEval);
  rows.push_back({"mask", to_string(config.pooling) + " over i, f_lambda, resize, channel softmax",
                  {1, mask.c(), mask.h(), mask.w()}});
  const Tensor<float> r = model.reshape(feats, Mode::kEval);
  rows.push_back({"reshaper", "1x1 projection + average-pool resize", {1, r.c(), r.h(), r.w()}});
  rows.push_back({"embedding", "mask * reshaped, flattened", {1, static_cast<int>(r.shape().sample_size()), 1, 1}});
  return rows;
}

std::string format_shape_table(const ModelConfig& config) {
  std::ostringstream os;
  os << "backbone=" << to_string(config.backbone) << " dstm=" << (config.use_dstm ? to_string(config.dstm_block) : "none")
     << " pooling=" << to_string(config.pooling) << "\n";
  for (const auto& row : shape_table(config)) {
    const auto& s = row.shape;
    std::string dims = std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
    os << "  " << row.stage;
    for (std::size_t i = row.stage.size(); i < 18; ++i) os << ' ';
    os << dims;
    for (std::size_t i = dims.size(); i < 14; ++i) os << ' ';
    os << row.layers << "\n";
  }
  return os.str();
}

}  // namespace aspectfsl
