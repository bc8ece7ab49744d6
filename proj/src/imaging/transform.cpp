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

#include "speculens/imaging.hpp"

namespace speculens {

using Eigen::Index;

namespace {

struct SquareCrop {
  Index y0, x0, side;
};

SquareCrop centre_square(Index h, Index w) {
  if (h < 1 || w < 1) throw DimensionError("square_crop_resize: empty image");
  const Index side = std::min(h, w);
  return {(h - side) / 2, (w - side) / 2, side};
}

}  // namespace

Plane resize_bilinear(const Plane& src, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output size must be positive");
  const Index in_h = src.rows(), in_w = src.cols();
  if (in_h == out_h && in_w == out_w) return src;
  Plane out(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (Index y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const Index y0 = static_cast<Index>(std::floor(fy));
    const Index y1 = std::min(y0 + 1, in_h - 1);
    const double ay = fy - y0;
    for (Index x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const Index x0 = static_cast<Index>(std::floor(fx));
      const Index x1 = std::min(x0 + 1, in_w - 1);
      const double ax = fx - x0;
      // Difference form keeps constant regions exact.
      const double top = src(y0, x0) + ax * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + ax * (src(y1, x1) - src(y1, x0));
      out(y, x) = top + ay * (bottom - top);
    }
  }
  return out;
}

Frame square_crop_resize(const Frame& frame, Index out) {
  const SquareCrop c = centre_square(frame.height(), frame.width());
  if (frame.height() == out && frame.width() == out) return frame;
  Frame res;
  for (int ch = 0; ch < 3; ++ch) {
    const Plane cropped = frame[ch].block(c.y0, c.x0, c.side, c.side);
    res[ch] = resize_bilinear(cropped, out, out);
  }
  return res;
}

Mask square_crop_resize(const Mask& mask, Index out) {
  const SquareCrop c = centre_square(mask.rows(), mask.cols());
  Mask res(out, out);
  for (Index y = 0; y < out; ++y) {
    const Index sy = std::min(c.side - 1, static_cast<Index>((y + 0.5) * c.side / out));
    for (Index x = 0; x < out; ++x) {
      const Index sx = std::min(c.side - 1, static_cast<Index>((x + 0.5) * c.side / out));
      res(y, x) = mask(c.y0 + sy, c.x0 + sx);
    }
  }
  return res;
}

StructuringElement ellipse_element(int k) {
  if (k < 1) throw ParameterError("ellipse_element: size must be >= 1, got " + std::to_string(k));
  if (k % 2 == 0) ++k;
  const int r = k / 2;
  StructuringElement se = StructuringElement::Zero(k, k);
  // Row extents of an ellipse with semi-axes (r, r), as in common imaging
  // toolkits: half-width round(r * sqrt(1 - dy^2 / r^2)).
  for (int i = 0; i < k; ++i) {
    const int dy = i - r;
    const int dx = r == 0 ? 0 : static_cast<int>(std::lround(r * std::sqrt(static_cast<double>(r * r - dy * dy) / (r * r))));
    for (int j = r - dx; j <= r + dx; ++j) se(i, j) = 1;
  }
  return se;
}

StructuringElement rect_element(int k) {
  if (k < 1) throw ParameterError("rect_element: size must be >= 1, got " + std::to_string(k));
  return StructuringElement::Ones(k, k);
}

Mask dilate(const Mask& mask, const StructuringElement& element, int iterations) {
  if (iterations < 0) throw ParameterError("dilate: iterations must be >= 0");
  const Index ay = element.rows() / 2, ax = element.cols() / 2;
  Mask current = mask;
  for (int it = 0; it < iterations; ++it) {
    Mask next = Mask::Zero(current.rows(), current.cols());
    for (Index y = 0; y < current.rows(); ++y) {
      for (Index x = 0; x < current.cols(); ++x) {
        if (!current(y, x)) continue;
        for (Index ey = 0; ey < element.rows(); ++ey) {
          const Index ty = y + ey - ay;
          if (ty < 0 || ty >= current.rows()) continue;
          for (Index ex = 0; ex < element.cols(); ++ex) {
            const Index tx = x + ex - ax;
            if (element(ey, ex) && tx >= 0 && tx < current.cols()) next(ty, tx) = 1;
          }
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace speculens
