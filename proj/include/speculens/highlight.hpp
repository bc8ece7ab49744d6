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

#include <vector>

#include "speculens/imaging.hpp"

namespace speculens {

/// Thresholds of the two-rule specular detector.
///
/// A pixel is specular when it is saturated in every channel, or when it is
/// markedly brighter than its neighbourhood while being close to achromatic
/// (the surface-reflection lobe carries the illuminant colour, not the tissue
/// colour).
struct DetectorConfig {
  /// min(R,G,B) at or above this marks a pixel as saturated.
  double saturation_threshold = 0.95;
  /// Intensity must exceed this multiple of the local median intensity.
  double chroma_ratio_threshold = 1.35;
  /// Side of the square median window, odd.
  int local_window = 31;
  /// 8-connected components smaller than this are dropped.
  int min_component_area = 4;
  /// |R-G|+|G-B|+|B-R| must stay below this fraction of R+G+B.
  double achromatic_tolerance = 0.15;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Median of the intensities inside the window centred at (y, x), clipped at
/// the image border. Even counts average the two middle values.
double local_median(const Plane& intensity, Eigen::Index y, Eigen::Index x, int window);

/// Removes 8-connected components with fewer than min_area pixels.
Mask remove_small_components(const Mask& mask, int min_area);

Mask detect_specular(const Frame& frame, const DetectorConfig& cfg = {});

/// Per-frame detection; frames are processed independently.
std::vector<Mask> detect_sequence(const std::vector<Frame>& frames, const DetectorConfig& cfg = {});

}  // namespace speculens
