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
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "speculens/checkpoint.hpp"
#include "speculens/metrics.hpp"
#include "speculens/pseudo_gt.hpp"
#include "speculens/sttn.hpp"

namespace speculens {

/// S_R: random masks from scratch. S_C: translated masks from scratch.
/// T_C: translated masks initialised from an S_R checkpoint. T_C_NT: T_C with
/// single-frame input.
enum class Preset { S_R, S_C, T_C, T_C_NT };

const char* preset_name(Preset p);
/// Throws ConfigError for an unknown name.
Preset parse_preset(const std::string& name);

struct PresetTraits {
  bool random_masks = false;
  bool transfer = false;
  bool single_frame = false;
};
PresetTraits preset_traits(Preset p);

struct TrainConfig {
  Preset preset = Preset::S_C;
  /// Generator/discriminator weights to start from; required by T_C and T_C_NT.
  std::optional<std::filesystem::path> init_checkpoint;
  long long max_iterations = 1000;
  /// Windows per step.
  int batch = 1;
  /// Frames per training clip.
  int clip_length = 8;
  SamplingConfig sampling;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  /// Checkpoint interval in iterations.
  long long eval_every = 500;
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  /// Strokes for the S_R preset; the seed is drawn per sample.
  RandomMaskConfig random_masks;
  bool double_precision = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool single_frame() const { return preset_traits(preset).single_frame; }
  /// Sampling after preset overrides (T_C_NT uses n = 0).
  SamplingConfig effective_sampling() const;
};

/// Frames (both the input X and the target Y) and masks of one window.
template <typename Scalar>
struct TrainingWindow {
  Tensor<Scalar> frames;
  Tensor<Scalar> masks;
  /// Indices into the clip the window was cut from.
  std::vector<int> indices;
  int center = 0;
};

/// Window around t_center of `frames`/`masks` (equal lengths).
template <typename Scalar>
TrainingWindow<Scalar> sample_training_window(const std::vector<Frame>& frames, const std::vector<Mask>& masks,
                                              int t_center, const SamplingConfig& sampling, bool single_frame = false);

/// Losses of one iteration.
struct LossRow {
  long long iteration = 0;
  double hole = 0;
  double valid = 0;
  double adv = 0;
  double d_real = 0;
  double d_fake = 0;
};

/// A loss or gradient became non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owns the generator, discriminator and their optimizers.
template <typename Scalar>
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig cfg);

  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  Generator<Scalar>& generator() { return gen_; }
  const Generator<Scalar>& generator() const { return gen_; }
  Discriminator<Scalar>& discriminator() { return disc_; }
  long long iteration() const { return iteration_; }

  /// Random window from a random clip of a random training video, with masks
  /// chosen by the preset.
  TrainingWindow<Scalar> sample(const std::vector<VideoSample>& videos, std::mt19937_64& rng) const;

  /// One discriminator update followed by one generator update, with the
  /// window losses averaged over the batch. Throws TrainingDiverged before
  /// touching the weights of the failing network.
  LossRow step(const std::vector<TrainingWindow<Scalar>>& batch);

  /// Generator losses without any update.
  LossRow evaluate(const TrainingWindow<Scalar>& window) const;

  Checkpoint checkpoint() const;
  /// Weights, optimizer state and iteration counter.
  void resume(const Checkpoint& ckpt);
  /// Weights only; iteration and optimizer state start fresh.
  void initialize_from(const Checkpoint& ckpt);

 private:
  ModelConfig model_;
  TrainConfig cfg_;
  Generator<Scalar> gen_;
  Discriminator<Scalar> disc_;
  AdamState<Scalar> gen_opt_, disc_opt_;
  long long iteration_ = 0;
};

struct TrainResult {
  long long iterations = 0;
  std::vector<LossRow> losses;
  std::filesystem::path last_checkpoint;
  bool diverged = false;
};

/// Trains on the training split of `videos`, writing <out>/losses.csv and
/// <out>/ckpt/iter_%08d.bin (at iteration 0, every eval_every iterations and at
/// the end). On divergence the loop stops and the last written checkpoint is
/// reported.
TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const std::vector<VideoSample>& videos,
                  const std::filesystem::path& out_dir);

/// Loss log with columns iteration, L_hole, L_valid, L_adv, L_D_real, L_D_fake.
MetricReport loss_report(const std::vector<LossRow>& rows);

std::string checkpoint_name(long long iteration);

/// JSON with the model and training settings, stored in checkpoints.
std::string config_echo(const ModelConfig& model, const TrainConfig& cfg);
/// Model settings from a checkpoint's config text.
ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt);

/// Generator rebuilt from a checkpoint.
template <typename Scalar>
Generator<Scalar> load_generator(const Checkpoint& ckpt);

/// Every frame inpainted from its own window: the centre output composited
/// onto the input with M*Y_hat + (1-M)*X.
template <typename Scalar>
std::vector<Frame> inpaint_video(const Generator<Scalar>& gen, const std::vector<Frame>& frames,
                                 const std::vector<Mask>& masks, const SamplingConfig& sampling,
                                 bool single_frame = false);

struct VideoScore {
  std::string id;
  std::size_t frames_scored = 0;
  double psnr = 0;
  double mse = 0;
};

struct EvaluationResult {
  std::vector<VideoScore> videos;
  double psnr_mean = 0;
  double mse_mean = 0;
  /// Columns video, frames, psnr, mse plus a final "mean" row.
  MetricReport report() const;
};

/// Masked PSNR/MSE of `inpainted` against `targets` under `masks`, per frame;
/// frames with empty masks are skipped.
VideoScore score_video(const std::string& id, const std::vector<Frame>& targets, const std::vector<Frame>& inpainted,
                       const std::vector<Mask>& masks);

/// Unweighted mean over videos of the per-video means. Throws
/// UndefinedMetricError when `videos` is empty.
EvaluationResult aggregate_scores(std::vector<VideoScore> videos);

/// Two-level mean over the test videos, scored under their translated masks.
/// Videos without any masked pixel are skipped with a warning.
template <typename Scalar>
EvaluationResult evaluate_generator(const Generator<Scalar>& gen, const std::vector<VideoSample>& test_videos,
                                    const SamplingConfig& sampling, bool single_frame = false);

EvaluationResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                     const std::vector<VideoSample>& test_videos, const SamplingConfig& sampling,
                                     bool single_frame = false);

}  // namespace speculens
