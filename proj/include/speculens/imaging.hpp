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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "speculens/errors.hpp"

namespace speculens {

/// One image channel, row-major, values in [0,1].
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary occlusion map; 1 marks an occluded (specular / hole) pixel.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB frame with values in [0,1].
struct Frame {
  std::array<Plane, 3> rgb;

  Frame() = default;
  Frame(Eigen::Index height, Eigen::Index width, double fill = 0.0);

  Eigen::Index height() const { return rgb[0].rows(); }
  Eigen::Index width() const { return rgb[0].cols(); }
  Plane& operator[](int c) { return rgb[static_cast<std::size_t>(c)]; }
  const Plane& operator[](int c) const { return rgb[static_cast<std::size_t>(c)]; }
  /// Mean of the three channels.
  Plane intensity() const { return (rgb[0] + rgb[1] + rgb[2]) / 3.0; }
  /// Rec. 601 luma.
  Plane gray() const { return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]; }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.height() == b.height() && a.width() == b.width() && (a.rgb[0] == b.rgb[0]).all() &&
           (a.rgb[1] == b.rgb[1]).all() && (a.rgb[2] == b.rgb[2]).all();
  }
};

inline Mask empty_mask(Eigen::Index height, Eigen::Index width) { return Mask::Zero(height, width); }
inline Eigen::Index mask_area(const Mask& m) { return (m != 0).count(); }

// --- File I/O -------------------------------------------------------------
// PNG (8-bit, any colour type) and binary PPM (P6) are recognised by extension.

Frame load_frame(const std::filesystem::path& path);
/// Lexicographically ordered .png/.ppm files. Empty directory gives an empty
/// list; differing frame sizes raise DimensionError.
std::vector<Frame> load_frames(const std::filesystem::path& dir);
/// 8-bit grayscale; values > 127 become 1.
Mask load_mask(const std::filesystem::path& path);
std::vector<Mask> load_masks(const std::filesystem::path& dir);

/// 8-bit RGB; each value is mapped to floor(v*255 + 0.5) after clamping.
void write_frame_png(const std::filesystem::path& path, const Frame& frame);
void write_frame_ppm(const std::filesystem::path& path, const Frame& frame);
/// 8-bit grayscale with pixels in {0, 255}.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Image files in `dir` with a supported extension, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Raw 16-bit single-channel PNG (e.g. scaled disparity maps).
Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> load_png16(
    const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path,
                 const Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& image);

// --- Geometry ---------------------------------------------------------------

/// Bilinear resample with pixel-centre alignment. Constant inputs stay
/// exactly constant.
Plane resize_bilinear(const Plane& src, Eigen::Index out_height, Eigen::Index out_width);

/// Centre crop to the largest square, then bilinear resize to out x out.
/// An input that is already out x out is returned unchanged.
Frame square_crop_resize(const Frame& frame, Eigen::Index out = 288);
/// Same crop, nearest-neighbour resize, for masks.
Mask square_crop_resize(const Mask& mask, Eigen::Index out = 288);

// --- Morphology ---------------------------------------------------------------

/// Binary structuring element with its anchor at the centre.
using StructuringElement = Mask;

/// Filled ellipse inscribed in a k x k box. Even k is bumped to k + 1 so the
/// element has a centre pixel.
StructuringElement ellipse_element(int k);
StructuringElement rect_element(int k);

/// Binary dilation repeated `iterations` times; 0 iterations is the identity.
Mask dilate(const Mask& mask, const StructuringElement& element, int iterations = 1);

}  // namespace speculens
