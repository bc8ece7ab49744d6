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

#include <algorithm>
#include <cmath>
#include <string>

#include "speculens/highlight.hpp"

namespace speculens {

using Eigen::Index;

void DetectorConfig::validate() const {
  if (!(saturation_threshold > 0.0)) throw ConfigError("detector.saturation_threshold must be > 0");
  if (!(chroma_ratio_threshold > 0.0)) throw ConfigError("detector.chroma_ratio_threshold must be > 0");
  if (local_window < 1 || local_window % 2 == 0) throw ConfigError("detector.local_window must be a positive odd integer");
  if (min_component_area < 0) throw ConfigError("detector.min_component_area must be >= 0");
  if (!(achromatic_tolerance > 0.0)) throw ConfigError("detector.achromatic_tolerance must be > 0");
}

double local_median(const Plane& intensity, Index y, Index x, int window) {
  const Index r = window / 2;
  const Index y0 = std::max<Index>(0, y - r), y1 = std::min<Index>(intensity.rows() - 1, y + r);
  const Index x0 = std::max<Index>(0, x - r), x1 = std::min<Index>(intensity.cols() - 1, x + r);
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>((y1 - y0 + 1) * (x1 - x0 + 1)));
  for (Index yy = y0; yy <= y1; ++yy)
    for (Index xx = x0; xx <= x1; ++xx) vals.push_back(intensity(yy, xx));
  const std::size_t n = vals.size();
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(vals.begin(), mid);
  return 0.5 * (lower + upper);
}

Mask remove_small_components(const Mask& mask, int min_area) {
  if (min_area <= 1) return mask;
  Mask out = mask;
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> label =
      Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(mask.rows(), mask.cols());
  std::vector<std::pair<Index, Index>> stack, component;
  int next = 0;
  for (Index y = 0; y < mask.rows(); ++y) {
    for (Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x) || label(y, x)) continue;
      ++next;
      component.clear();
      stack.assign(1, {y, x});
      label(y, x) = next;
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        component.emplace_back(cy, cx);
        for (Index dy = -1; dy <= 1; ++dy)
          for (Index dx = -1; dx <= 1; ++dx) {
            const Index ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= mask.rows() || nx >= mask.cols()) continue;
            if (mask(ny, nx) && !label(ny, nx)) {
              label(ny, nx) = next;
              stack.emplace_back(ny, nx);
            }
          }
      }
      if (static_cast<int>(component.size()) < min_area) {
        for (const auto& [cy, cx] : component) out(cy, cx) = 0;
      }
    }
  }
  return out;
}

Mask detect_specular(const Frame& frame, const DetectorConfig& cfg) {
  cfg.validate();
  const Plane& r = frame[0];
  const Plane& g = frame[1];
  const Plane& b = frame[2];
  const Plane intensity = frame.intensity();
  Mask raw = Mask::Zero(frame.height(), frame.width());
  for (Index y = 0; y < frame.height(); ++y) {
    for (Index x = 0; x < frame.width(); ++x) {
      const double lo = std::min({r(y, x), g(y, x), b(y, x)});
      if (lo >= cfg.saturation_threshold) {
        raw(y, x) = 1;
        continue;
      }
      const double i = intensity(y, x);
      if (i <= 0.0) continue;
      const double imbalance = std::abs(r(y, x) - g(y, x)) + std::abs(g(y, x) - b(y, x)) + std::abs(b(y, x) - r(y, x));
      if (!(imbalance < cfg.achromatic_tolerance * 3.0 * i)) continue;
      // Only near-achromatic candidates pay for the median.
      if (i > cfg.chroma_ratio_threshold * local_median(intensity, y, x, cfg.local_window)) raw(y, x) = 1;
    }
  }
  return remove_small_components(raw, cfg.min_component_area);
}

std::vector<Mask> detect_sequence(const std::vector<Frame>& frames, const DetectorConfig& cfg) {
  if (frames.empty()) throw ParameterError("detect_sequence: empty frame list");
  std::vector<Mask> masks;
  masks.reserve(frames.size());
  for (const auto& f : frames) masks.push_back(detect_specular(f, cfg));
  return masks;
}

}  // namespace speculens
