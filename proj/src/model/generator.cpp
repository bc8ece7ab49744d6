/*
 * Copyright 2026 The Speculens Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "model_internal.hpp"
#include "speculens/sttn.hpp"

namespace speculens {

namespace {

constexpr double kSlope = 0.2;

template <typename Scalar>
std::vector<bool> validity_impl(const Tensor<Scalar>& masks, Index fh, Index fw, const HeadConfig& head) {
  if (masks.rank() != 4 || masks.dim(1) != 1) throw DimensionError("patch_validity: masks must be [T,1,H,W]");
  const Index t_count = masks.dim(0), h = masks.dim(2), w = masks.dim(3);
  if (fh < 1 || fw < 1 || h % fh != 0 || w % fw != 0)
    throw DimensionError("patch_validity: feature size does not divide the mask size");
  if (fh % head.patch_r1 != 0 || fw % head.patch_r2 != 0)
    throw DimensionError("patch_validity: patch size does not divide the feature size");
  const Index sy = h / fh * head.patch_r1, sx = w / fw * head.patch_r2;
  const Index gy = fh / head.patch_r1, gx = fw / head.patch_r2;
  const auto v = masks.values();
  std::vector<bool> out;
  out.reserve(static_cast<std::size_t>(t_count * gy * gx));
  for (Index t = 0; t < t_count; ++t)
    for (Index py = 0; py < gy; ++py)
      for (Index px = 0; px < gx; ++px) {
        bool valid = false;
        for (Index y = py * sy; y < (py + 1) * sy && !valid; ++y)
          for (Index x = px * sx; x < (px + 1) * sx; ++x)
            if (v[static_cast<std::size_t>((t * h + y) * w + x)] < Scalar(0.5)) {
              valid = true;
              break;
            }
        out.push_back(valid);
      }
  return out;
}

template <typename Scalar>
Tensor<Scalar> lrelu(const Tensor<Scalar>& x) {
  return leaky_relu(x, static_cast<Scalar>(kSlope));
}

}  // namespace

std::vector<bool> patch_validity(const Tensor<double>& masks, Index fh, Index fw, const HeadConfig& head) {
  return validity_impl(masks, fh, fw, head);
}

std::vector<bool> patch_validity(const Tensor<float>& masks, Index fh, Index fw, const HeadConfig& head) {
  return validity_impl(masks, fh, fw, head);
}

template <typename Scalar>
AttentionOutput<Scalar> head_attention(const Tensor<Scalar>& features, const std::vector<bool>& key_valid,
                                       const HeadConfig& head, const HeadWeights<Scalar>& w) {
  if (features.rank() != 4) throw DimensionError("head_attention: features must be [T,c,hf,wf]");
  const Index t_count = features.dim(0), hf = features.dim(2), wf = features.dim(3);
  const Tensor<Scalar> q = conv2d(features, w.query_weight, w.query_bias, 1, 0);
  const Tensor<Scalar> k = conv2d(features, w.key_weight, w.key_bias, 1, 0);
  const Tensor<Scalar> v = conv2d(features, w.value_weight, w.value_bias, 1, 0);
  const Index d = q.dim(1);
  const Index r1 = head.patch_r1, r2 = head.patch_r2;

  Tensor<Scalar> pq = patch_extract(q, r1, r2);
  const Index per_frame = pq.dim(1), length = pq.dim(2);
  const Index n = t_count * per_frame;
  if (static_cast<Index>(key_valid.size()) != n)
    throw DimensionError("head_attention: key validity has " + std::to_string(key_valid.size()) + " entries, expected " +
                         std::to_string(n));
  pq = reshape(pq, {n, length});
  const Tensor<Scalar> pk = reshape(patch_extract(k, r1, r2), {n, length});
  const Tensor<Scalar> pv = reshape(patch_extract(v, r1, r2), {n, length});

  const Scalar norm = Scalar(1) / std::sqrt(static_cast<Scalar>(r1 * r2 * d));
  Tensor<Scalar> scores = scale(matmul(pq, transpose(pk)), norm);
  scores = mask_last_axis(scores, key_valid, -std::numeric_limits<Scalar>::infinity());
  const Tensor<Scalar> alpha = softmax(scores, -1);
  const Tensor<Scalar> attended = reshape(matmul(alpha, pv), {t_count, per_frame, length});
  return {patch_fold(attended, d, hf, wf, r1, r2), alpha};
}

template <typename Scalar>
Generator<Scalar>::Generator(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const Index c = cfg_.channels;
  const Index d = c / static_cast<Index>(cfg_.heads.size());
  detail::add_conv(params_, "enc.0", cfg_.encoder_width1, 4, 3, rng);
  detail::add_conv(params_, "enc.1", cfg_.encoder_width2, cfg_.encoder_width1, 3, rng);
  detail::add_conv(params_, "enc.2", c, cfg_.encoder_width2, 3, rng);
  for (Index l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    for (std::size_t h = 0; h < cfg_.heads.size(); ++h) {
      const std::string ph = p + ".head" + std::to_string(h);
      detail::add_conv(params_, ph + ".query", d, c, 1, rng);
      detail::add_conv(params_, ph + ".key", d, c, 1, rng);
      detail::add_conv(params_, ph + ".value", d, c, 1, rng);
    }
    detail::add_conv(params_, p + ".out", c, c, 1, rng);
    detail::add_conv(params_, p + ".ffn.0", c, c, 3, rng);
    detail::add_conv(params_, p + ".ffn.1", c, c, 3, rng);
  }
  detail::add_conv(params_, "dec.0", cfg_.decoder_width, c, 3, rng);
  detail::add_conv(params_, "dec.1", 3, cfg_.decoder_width, 3, rng);
}

template <typename Scalar>
HeadWeights<Scalar> Generator<Scalar>::head_weights(Index layer, Index head) const {
  const std::string p = "layer" + std::to_string(layer) + ".head" + std::to_string(head);
  return {params_.get(p + ".query.weight"), params_.get(p + ".query.bias"),
          params_.get(p + ".key.weight"),   params_.get(p + ".key.bias"),
          params_.get(p + ".value.weight"), params_.get(p + ".value.bias")};
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::encode(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks) const {
  detail::check_frames(frames, masks, cfg_.image_size, "encode");
  const Tensor<Scalar> keep = add_scalar(scale(masks, Scalar(-1)), Scalar(1));
  const Tensor<Scalar> x = concat<Scalar>({mul(add_scalar(scale(frames, Scalar(2)), Scalar(-1)), keep), masks}, 1);
  Tensor<Scalar> f = lrelu(detail::conv(params_, "enc.0", x, 2, 1));
  f = lrelu(detail::conv(params_, "enc.1", f, 2, 1));
  return lrelu(detail::conv(params_, "enc.2", f, 1, 1));
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::transformer_layer(Index layer, const Tensor<Scalar>& features,
                                                   const Tensor<Scalar>& masks) const {
  if (layer < 0 || layer >= cfg_.layers) throw ParameterError("transformer_layer: layer index out of range");
  const std::string p = "layer" + std::to_string(layer);
  std::vector<Tensor<Scalar>> parts;
  for (std::size_t h = 0; h < cfg_.heads.size(); ++h) {
    const auto valid = patch_validity(masks, features.dim(2), features.dim(3), cfg_.heads[h]);
    parts.push_back(head_attention(features, valid, cfg_.heads[h], head_weights(layer, static_cast<Index>(h))).output);
  }
  const Tensor<Scalar> mixed = detail::conv(params_, p + ".out", concat(parts, 1), 1, 0);
  const Tensor<Scalar> x = add(features, mixed);
  const Tensor<Scalar> r = detail::conv(params_, p + ".ffn.1", lrelu(detail::conv(params_, p + ".ffn.0", x, 1, 1)), 1, 1);
  return add(x, r);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::decode(const Tensor<Scalar>& features) const {
  Tensor<Scalar> y = lrelu(detail::conv(params_, "dec.0", upsample_nearest(features, 2), 1, 1));
  y = tanh(detail::conv(params_, "dec.1", upsample_nearest(y, 2), 1, 1));
  return scale(add_scalar(y, Scalar(1)), Scalar(0.5));
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::forward(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks) const {
  Tensor<Scalar> f = encode(frames, masks);
  for (Index l = 0; l < cfg_.layers; ++l) f = transformer_layer(l, f, masks);
  return decode(f);
}

template <typename Scalar>
std::pair<Tensor<Scalar>, std::vector<int>> generator_forward(const Generator<Scalar>& g, const Tensor<Scalar>& frames,
                                                               const Tensor<Scalar>& masks,
                                                               const SamplingConfig& sampling, int t_center,
                                                               bool single_frame) {
  if (frames.rank() != 4) throw DimensionError("generator_forward: frames must be [T,3,H,W]");
  const auto window = window_indices(static_cast<int>(frames.dim(0)), t_center, sampling, single_frame);
  const std::vector<Index> idx(window.begin(), window.end());
  return {g.forward(index_select(frames, 0, idx), index_select(masks, 0, idx)), window};
}

template class Generator<float>;
template class Generator<double>;

#define SPECULENS_INSTANTIATE_GEN(S)                                                                              \
  template AttentionOutput<S> head_attention<S>(const Tensor<S>&, const std::vector<bool>&, const HeadConfig&,     \
                                                const HeadWeights<S>&);                                           \
  template std::pair<Tensor<S>, std::vector<int>> generator_forward<S>(                                           \
      const Generator<S>&, const Tensor<S>&, const Tensor<S>&, const SamplingConfig&, int, bool);

SPECULENS_INSTANTIATE_GEN(float)
SPECULENS_INSTANTIATE_GEN(double)

}  // namespace speculens
