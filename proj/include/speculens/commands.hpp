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

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "speculens/config.hpp"

namespace speculens {

// Subcommands of the speculens tool. Each reads its inputs from disk, writes
// its artifacts under `out` together with config.toml and VERSION, and throws
// on failure (see exit_code_for).

/// Config with the SPECULENS_SEED override applied.
PipelineConfig resolve_config(const std::filesystem::path& path);
/// `out` under SPECULENS_OUT_ROOT when that is set and `out` is relative.
std::filesystem::path resolve_out(const std::filesystem::path& out);

struct DetectArgs {
  std::filesystem::path config;
  /// Directory of frames.
  std::filesystem::path input;
  std::filesystem::path out;
};
/// <out>/masks/<frame stem>.png, one per frame.
void cmd_detect(const DetectArgs& args);

struct PseudoGtArgs {
  std::filesystem::path config;
  /// One sub-directory of frames per video.
  std::filesystem::path input;
  std::filesystem::path out;
};
/// Dataset layout of build_dataset under <out>.
void cmd_pseudo_gt(const PseudoGtArgs& args);

struct TrainArgs {
  std::filesystem::path config;
  /// Dataset written by cmd_pseudo_gt.
  std::filesystem::path data;
  std::filesystem::path out;
};
/// <out>/losses.csv and <out>/ckpt/iter_%08d.bin. Returns the training summary.
TrainResult cmd_train(const TrainArgs& args);

struct InpaintArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  MaskSource mask_source = MaskSource::orig;
  /// "train", "test" or "all".
  std::string split = "test";
};
/// <out>/<video>/%06d.png.
void cmd_inpaint(const InpaintArgs& args);

struct EvalPsnrArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};
/// <out>/psnr.csv over the test split under translated masks.
EvaluationResult cmd_eval_psnr(const EvalPsnrArgs& args);

struct EvalPoseArgs {
  std::filesystem::path config;
  /// Frames of the original sequence.
  std::filesystem::path orig;
  /// Frames of the inpainted sequence; optional.
  std::optional<std::filesystem::path> inpainted;
  /// Camera-to-world matrices, one per line.
  std::filesystem::path poses;
  /// "fx fy cx cy [skew]".
  std::filesystem::path intrinsics;
  /// Read %06d_%06d.csv correspondence files from the frame directories
  /// instead of matching features.
  bool csv_correspondences = false;
  std::filesystem::path out;
};

struct PoseSummary {
  std::size_t pairs = 0;
  std::size_t failed_orig = 0;
  std::size_t failed_inp = 0;
};
/// <out>/pose_orig.csv and, with an inpainted sequence, pose_inp.csv and
/// pose_delta.csv (delta = orig - inp over pairs that succeeded in both), plus
/// pose_summary.csv with pair and failure counts.
PoseSummary cmd_eval_pose(const EvalPoseArgs& args);

struct EvalDisparityArgs {
  std::filesystem::path config;
  std::filesystem::path manifest;
  std::filesystem::path out;
};
/// <out>/disparity.csv.
void cmd_eval_disparity(const EvalDisparityArgs& args);

struct GradcheckArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  /// Coordinates per tensor, 0 for all.
  Index per_tensor = 0;
  double tolerance = 1e-4;
};
/// <out>/gradcheck.csv. Returns whether the check passed.
bool cmd_gradcheck(const GradcheckArgs& args);

/// 0 on success, 2 for ConfigError, 3 for IoError, 1 otherwise. Logs the
/// error message.
int exit_code_for(const std::function<void()>& command);

}  // namespace speculens
