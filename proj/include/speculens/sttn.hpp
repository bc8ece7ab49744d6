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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "speculens/imaging.hpp"
#include "speculens/tensor.hpp"

namespace speculens {

/// Patch size of one attention head, in feature-map pixels.
struct HeadConfig {
  Index patch_r1 = 1;
  Index patch_r2 = 1;

  bool operator==(const HeadConfig&) const = default;
};

/// Which frames feed the generator for a target frame.
struct SamplingConfig {
  /// Neighbours on each side of the target.
  int neighbor_radius = 2;
  /// Stride of the distant reference frames 0, s, 2s, ...
  int distant_stride = 4;

  void validate() const;
};

/// Sorted, deduplicated frame indices for target t_center in a sequence of
/// `length` frames: {0, s, 2s, ...} together with the neighbours clamped to the
/// sequence. Single-frame mode returns {t_center}.
std::vector<int> window_indices(int length, int t_center, const SamplingConfig& sampling, bool single_frame = false);

struct LossWeights {
  double hole = 1.0;
  double valid = 1.0;
  double adv = 0.01;

  void validate() const;
};

struct ModelConfig {
  /// Feature channels inside the transformer.
  Index channels = 128;
  Index layers = 8;
  std::vector<HeadConfig> heads = {{36, 36}, {18, 18}, {9, 9}, {6, 6}};
  /// Output widths of the two stride-2 encoder convolutions.
  Index encoder_width1 = 64;
  Index encoder_width2 = 128;
  /// Width between the two decoder upsampling stages.
  Index decoder_width = 64;
  /// Channels of the discriminator's two stride-2 stages.
  Index disc_width1 = 64;
  Index disc_width2 = 128;
  /// Frame side length the model is built for.
  Index image_size = 288;

  Index feature_size() const { return image_size / 4; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Named, ordered parameter tensors. Copies share the underlying storage.
template <typename Scalar>
class ParameterSet {
 public:
  Tensor<Scalar>& add(std::string name, Tensor<Scalar> value);
  const Tensor<Scalar>& get(const std::string& name) const;
  Tensor<Scalar>& get(const std::string& name);
  bool contains(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<Scalar>>& tensors() { return tensors_; }
  const std::vector<Tensor<Scalar>>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  Index numel() const;
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Scalar>> tensors_;
};

/// 1x1 query/key/value embeddings of one head.
template <typename Scalar>
struct HeadWeights {
  Tensor<Scalar> query_weight, query_bias;
  Tensor<Scalar> key_weight, key_bias;
  Tensor<Scalar> value_weight, value_bias;
};

template <typename Scalar>
struct AttentionOutput {
  /// [T, head channels, hf, wf].
  Tensor<Scalar> output;
  /// [N, N] attention over the N = T * patches-per-frame patches.
  Tensor<Scalar> weights;
};

/// Per-patch validity for a head: a patch is valid when any image pixel under
/// it is unmasked. `masks` is [T,1,H,W] with 1 marking missing pixels; the
/// feature map is H/hf times smaller. Order matches patch_extract over frames.
std::vector<bool> patch_validity(const Tensor<double>& masks, Index feature_h, Index feature_w, const HeadConfig& head);
std::vector<bool> patch_validity(const Tensor<float>& masks, Index feature_h, Index feature_w, const HeadConfig& head);

/// Patch attention across all frames of `features` [T,c,hf,wf]. Scores are
/// q.k / sqrt(r1 r2 d) with d the head's embedding channels; keys from fully
/// missing patches get weight zero.
template <typename Scalar>
AttentionOutput<Scalar> head_attention(const Tensor<Scalar>& features, const std::vector<bool>& key_valid,
                                       const HeadConfig& head, const HeadWeights<Scalar>& weights);

/// Encoder, transformer layers and decoder.
template <typename Scalar>
class Generator {
 public:
  Generator(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  HeadWeights<Scalar> head_weights(Index layer, Index head) const;

  /// frames [T,3,H,W] in [0,1], masks [T,1,H,W] -> features [T,c,H/4,W/4].
  Tensor<Scalar> encode(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks) const;
  /// One transformer block: per-head attention, concatenation, 1x1 mix with a
  /// skip connection, then a two-convolution residual block.
  Tensor<Scalar> transformer_layer(Index layer, const Tensor<Scalar>& features, const Tensor<Scalar>& masks) const;
  /// Features -> frames in [0,1].
  Tensor<Scalar> decode(const Tensor<Scalar>& features) const;
  /// Output for every input frame.
  Tensor<Scalar> forward(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks) const;

 private:
  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
};

/// Spatio-temporal patch critic. Frames [T,3,H,W] -> raw scores [T,1,H/4,W/4].
template <typename Scalar>
class Discriminator {
 public:
  Discriminator(ModelConfig cfg, std::uint64_t seed);

  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  Tensor<Scalar> score(const Tensor<Scalar>& frames) const;

 private:
  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
};

/// Generator output for the window around t_center, with the frame indices used.
template <typename Scalar>
std::pair<Tensor<Scalar>, std::vector<int>> generator_forward(const Generator<Scalar>& g, const Tensor<Scalar>& frames,
                                                               const Tensor<Scalar>& masks,
                                                               const SamplingConfig& sampling, int t_center,
                                                               bool single_frame = false);

/// M*Y_hat + (1-M)*X with masks broadcast over channels.
template <typename Scalar>
Tensor<Scalar> composite(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks, const Tensor<Scalar>& predicted);
Frame composite(const Frame& frame, const Mask& mask, const Frame& predicted);

/// Sum over channels of |M (Y - Y_hat)| divided by the masked pixel count times
/// the channel count; zero when nothing is masked.
template <typename Scalar>
Tensor<Scalar> loss_hole(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& masks);
/// As loss_hole over the unmasked pixels.
template <typename Scalar>
Tensor<Scalar> loss_valid(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& masks);

/// -mean(D(Y_hat)).
template <typename Scalar>
Tensor<Scalar> loss_adv_generator(const Tensor<Scalar>& fake_scores);
/// mean(relu(1 - D(Y))).
template <typename Scalar>
Tensor<Scalar> hinge_real(const Tensor<Scalar>& real_scores);
/// mean(relu(1 + D(Y_hat))).
template <typename Scalar>
Tensor<Scalar> hinge_fake(const Tensor<Scalar>& fake_scores);
template <typename Scalar>
Tensor<Scalar> loss_discriminator(const Tensor<Scalar>& real_scores, const Tensor<Scalar>& fake_scores);

template <typename Scalar>
Tensor<Scalar> total_loss(const Tensor<Scalar>& hole, const Tensor<Scalar>& valid, const Tensor<Scalar>& adv,
                          const LossWeights& w);
double total_loss(double hole, double valid, double adv, const LossWeights& w);

/// [T,3,H,W] from the selected frames.
template <typename Scalar>
Tensor<Scalar> frames_to_tensor(const std::vector<Frame>& frames, const std::vector<int>& indices);
/// [T,1,H,W] with 1 for missing pixels.
template <typename Scalar>
Tensor<Scalar> masks_to_tensor(const std::vector<Mask>& masks, const std::vector<int>& indices);
/// Frame t of a [T,3,H,W] tensor, clamped to [0,1].
template <typename Scalar>
Frame tensor_to_frame(const Tensor<Scalar>& frames, Index t);

/// Finite-difference check of the generator's parameter gradients on a small
/// double-precision model.
struct GradcheckConfig {
  ModelConfig model;
  Index frames = 2;
  /// Central-difference step.
  double step = 1e-5;
  /// Parameters checked per tensor, evenly spread; 0 checks all.
  Index per_tensor = 0;
  std::uint64_t seed = 1;

  /// 2 frames of 36x36, one layer, heads 9x9 and 3x3.
  static GradcheckConfig micro();
};

struct GradcheckResult {
  /// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
  double max_relative_error = 0;
  double max_absolute_error = 0;
  Index checked = 0;
  /// Coordinates whose +-step evaluations crossed a kink; not compared.
  Index skipped = 0;
  std::string worst_parameter;
};

/// Compares backward() with central differences of L_hole + L_valid against a
/// random target under a rectangular hole. Coordinates whose two evaluations
/// fall on a different side of any leaky_relu or abs kink than the unperturbed
/// point are counted in `skipped` instead of compared.
GradcheckResult gradcheck_generator(const GradcheckConfig& cfg);

}  // namespace speculens
