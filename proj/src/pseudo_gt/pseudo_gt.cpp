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
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "speculens/pseudo_gt.hpp"

namespace speculens {

using Eigen::Index;

void DilationConfig::validate() const {
  if (shape != "ellipse" && shape != "rect") throw ConfigError("pseudo_gt.dilation_shape must be \"ellipse\" or \"rect\"");
  if (kernel < 1) throw ConfigError("pseudo_gt.dilation_kernel must be >= 1");
  if (iterations < 0) throw ConfigError("pseudo_gt.dilation_iterations must be >= 0");
}

StructuringElement DilationConfig::element() const {
  validate();
  return shape == "rect" ? rect_element(kernel) : ellipse_element(kernel);
}

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

Mask translate(const Mask& mask, Offset offset) {
  const Index h = mask.rows(), w = mask.cols();
  Mask out = Mask::Zero(h, w);
  const Index ys = std::max<Index>(0, -offset.dy), ye = std::min<Index>(h, h - offset.dy);
  const Index xs = std::max<Index>(0, -offset.dx), xe = std::min<Index>(w, w - offset.dx);
  if (ys >= ye || xs >= xe) return out;
  out.block(ys + offset.dy, xs + offset.dx, ye - ys, xe - xs) = mask.block(ys, xs, ye - ys, xe - xs);
  return out;
}

Mask translate_and_clean(const Mask& mask, Offset offset) {
  const Mask shifted = translate(mask, offset);
  return (shifted != 0 && mask == 0).cast<std::uint8_t>();
}

VideoSample build_pseudo_gt(std::vector<Frame> frames, std::vector<Mask> orig_masks, Offset offset,
                            const DilationConfig& dilation) {
  if (frames.size() != orig_masks.size()) {
    throw DimensionError("build_pseudo_gt: " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(orig_masks.size()) + " masks");
  }
  const StructuringElement se = dilation.element();
  VideoSample s;
  s.trans_masks.reserve(orig_masks.size());
  std::size_t empty = 0;
  for (std::size_t t = 0; t < orig_masks.size(); ++t) {
    const Mask& m = orig_masks[t];
    if (m.rows() != frames[t].height() || m.cols() != frames[t].width()) {
      throw DimensionError("build_pseudo_gt: mask " + std::to_string(t) + " does not match its frame");
    }
    Mask trans;
    if (dilation.before_translate) {
      trans = translate(dilate(m, se, dilation.iterations), offset);
      trans = (trans != 0 && m == 0).cast<std::uint8_t>();
      if (mask_area(trans) == 0) ++empty;
    } else {
      const Mask cleaned = translate_and_clean(m, offset);
      if (mask_area(cleaned) == 0) ++empty;
      trans = dilate(cleaned, se, dilation.iterations);
    }
    s.trans_masks.push_back(std::move(trans));
  }
  if (!orig_masks.empty() && 2 * empty > orig_masks.size()) {
    spdlog::warn("{} of {} translated masks are empty; offset ({}, {}) may be too small", empty, orig_masks.size(),
                 offset.dx, offset.dy);
  }
  s.frames = std::move(frames);
  s.orig_masks = std::move(orig_masks);
  return s;
}

// --- Random masks -------------------------------------------------------------

void RandomMaskConfig::validate() const {
  if (strokes_per_frame < 1) throw ConfigError("train.mask_strokes_per_frame must be >= 1");
  if (brush_width < 1) throw ConfigError("train.mask_brush_width must be >= 1");
  if (max_step < 0) throw ConfigError("train.mask_max_step must be >= 0");
}

namespace {

void stamp_disc(Mask& m, double cy, double cx, double radius) {
  const Index y0 = static_cast<Index>(std::floor(cy - radius)), y1 = static_cast<Index>(std::ceil(cy + radius));
  const Index x0 = static_cast<Index>(std::floor(cx - radius)), x1 = static_cast<Index>(std::ceil(cx + radius));
  for (Index y = std::max<Index>(0, y0); y <= std::min<Index>(m.rows() - 1, y1); ++y)
    for (Index x = std::max<Index>(0, x0); x <= std::min<Index>(m.cols() - 1, x1); ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) m(y, x) = 1;
}

Mask random_polyline(Index h, Index w, int brush, std::mt19937_64& rng) {
  const double radius = std::max(0.5, brush / 2.0);
  const double lo_y = std::min(radius, (h - 1) / 2.0), hi_y = h - 1 - lo_y;
  const double lo_x = std::min(radius, (w - 1) / 2.0), hi_x = w - 1 - lo_x;
  std::uniform_real_distribution<double> uy(lo_y, hi_y), ux(lo_x, hi_x), angle(0.0, 2.0 * M_PI);
  const double max_len = std::max<double>(brush + 1, std::min(h, w) / 3.0);
  std::uniform_real_distribution<double> len(std::min<double>(brush, max_len), max_len);
  std::uniform_int_distribution<int> vertices(3, 6);

  Mask m = Mask::Zero(h, w);
  double y = uy(rng), x = ux(rng);
  stamp_disc(m, y, x, radius);
  const int n = vertices(rng);
  for (int v = 1; v < n; ++v) {
    const double a = angle(rng), l = len(rng);
    const double ny = std::clamp(y + l * std::sin(a), lo_y, hi_y);
    const double nx = std::clamp(x + l * std::cos(a), lo_x, hi_x);
    const int steps = std::max(1, static_cast<int>(std::ceil(2.0 * std::hypot(ny - y, nx - x))));
    for (int k = 1; k <= steps; ++k) stamp_disc(m, y + (ny - y) * k / steps, x + (nx - x) * k / steps, radius);
    y = ny;
    x = nx;
  }
  return m;
}

}  // namespace

std::vector<std::vector<Mask>> random_stroke_tracks(int T, Index height, Index width, const RandomMaskConfig& cfg) {
  cfg.validate();
  if (T < 1) throw ParameterError("random_continuous_masks: T must be >= 1");
  if (height < 1 || width < 1) throw DimensionError("random_continuous_masks: empty image");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> step(-cfg.max_step, cfg.max_step);
  std::vector<std::vector<Mask>> tracks;
  for (int s = 0; s < cfg.strokes_per_frame; ++s) {
    const Mask base = random_polyline(height, width, cfg.brush_width, rng);
    Index ymin = height, ymax = -1, xmin = width, xmax = -1;
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x)
        if (base(y, x)) {
          ymin = std::min(ymin, y);
          ymax = std::max(ymax, y);
          xmin = std::min(xmin, x);
          xmax = std::max(xmax, x);
        }
    std::vector<Mask> track;
    track.reserve(static_cast<std::size_t>(T));
    Offset at{0, 0};
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        at.dy = static_cast<int>(std::clamp<Index>(at.dy + step(rng), -ymin, height - 1 - ymax));
        at.dx = static_cast<int>(std::clamp<Index>(at.dx + step(rng), -xmin, width - 1 - xmax));
      }
      track.push_back(translate(base, at));
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<Mask> random_continuous_masks(int T, Index height, Index width, const RandomMaskConfig& cfg) {
  const auto tracks = random_stroke_tracks(T, height, width, cfg);
  std::vector<Mask> out(static_cast<std::size_t>(T), Mask::Zero(height, width));
  for (const auto& track : tracks)
    for (std::size_t t = 0; t < track.size(); ++t) out[t] = (out[t] != 0 || track[t] != 0).cast<std::uint8_t>();
  return out;
}

// --- Splits -------------------------------------------------------------------

SplitCounts split_counts(std::size_t n, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test_fraction must be in (0, 1)");
  if (n < 2) throw ParameterError("split_dataset needs at least 2 videos, got " + std::to_string(n));
  const double want = static_cast<double>(n) * test_fraction / (1.0 + test_fraction);
  const std::size_t test = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(want)), 1, n - 1);
  return {n - test, test};
}

std::vector<Split> split_dataset(const std::vector<std::string>& ids, double test_fraction, std::uint64_t seed) {
  const SplitCounts counts = split_counts(ids.size(), test_fraction);
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates so the partition does not depend on the standard
  // library's shuffle.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<Split> out(ids.size(), Split::train);
  for (std::size_t k = 0; k < counts.test; ++k) out[order[k]] = Split::test;
  return out;
}

}  // namespace speculens
