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
#include <string>
#include <vector>

#include "speculens/highlight.hpp"
#include "speculens/imaging.hpp"

namespace speculens {

/// Pixel displacement; +dx moves right, +dy moves down.
struct Offset {
  int dx = 32;
  int dy = 0;
};

struct DilationConfig {
  /// "ellipse" or "rect".
  std::string shape = "ellipse";
  int kernel = 9;
  int iterations = 1;
  /// Dilate the original mask before shifting instead of the shifted mask.
  bool before_translate = false;

  void validate() const;
  StructuringElement element() const;
};

enum class Split { train, test };
const char* split_name(Split s);

/// A clip together with the masks derived from it. The frames are the targets;
/// `trans_masks` mark the regions to be hidden and recovered during training.
struct VideoSample {
  std::string id;
  std::vector<Frame> frames;
  std::vector<Mask> orig_masks;
  std::vector<Mask> trans_masks;
  Split split = Split::train;
};

/// Shift with out-of-image pixels dropped.
Mask translate(const Mask& mask, Offset offset);

/// translate(mask, offset) minus mask.
Mask translate_and_clean(const Mask& mask, Offset offset);

/// Shifted, overlap-removed, dilated masks for each frame. Logs a warning when
/// more than half of the shifted masks come out empty.
VideoSample build_pseudo_gt(std::vector<Frame> frames, std::vector<Mask> orig_masks, Offset offset,
                            const DilationConfig& dilation = {});

struct RandomMaskConfig {
  int strokes_per_frame = 3;
  int brush_width = 9;
  /// Per-axis bound on the frame-to-frame stroke displacement. 0 freezes strokes.
  int max_step = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Each stroke is a rasterised polyline that moves rigidly by at most
/// `max_step` pixels per axis between consecutive frames and never leaves the
/// image. Returns tracks[stroke][t].
std::vector<std::vector<Mask>> random_stroke_tracks(int T, Eigen::Index height, Eigen::Index width,
                                                    const RandomMaskConfig& cfg);

/// Union of all stroke tracks per frame.
std::vector<Mask> random_continuous_masks(int T, Eigen::Index height, Eigen::Index width, const RandomMaskConfig& cfg);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t test = 0;
};

/// `test_fraction` is the size of the test set relative to the training set:
/// n_test = round(n * f / (1 + f)), clamped to [1, n - 1].
SplitCounts split_counts(std::size_t n, double test_fraction);

/// Seeded shuffle of `ids`, then the first split_counts().test go to test.
/// Returns the split of each id, in input order.
std::vector<Split> split_dataset(const std::vector<std::string>& ids, double test_fraction, std::uint64_t seed);

// --- On-disk dataset --------------------------------------------------------
// <root>/<id>/frames/%06d.png, masks_orig/%06d.png, masks_trans/%06d.png and a
// root manifest.json.

struct DatasetConfig {
  DetectorConfig detector;
  DilationConfig dilation;
  Offset offset;
  double test_fraction = 0.087;
  /// Side of the square frames written to disk; 0 keeps the input size.
  int image_size = 288;
  std::uint64_t seed = 0;
};

struct DatasetEntry {
  std::string id;
  Split split = Split::train;
  std::size_t frames = 0;
};

void write_video_sample(const std::filesystem::path& root, const VideoSample& sample);
VideoSample load_video_sample(const std::filesystem::path& root, const std::string& id);

void write_manifest(const std::filesystem::path& root, const DatasetConfig& cfg, const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> read_manifest(const std::filesystem::path& root);

/// Builds a dataset from `src`, which holds one directory per video with the
/// frames either directly inside or under `frames/`.
std::vector<DatasetEntry> build_dataset(const std::filesystem::path& src, const std::filesystem::path& out,
                                        const DatasetConfig& cfg);

}  // namespace speculens
