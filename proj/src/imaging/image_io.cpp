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
#include <cstring>
#include <fstream>
#include <string>

#include <png.h>

#include "speculens/imaging.hpp"

namespace fs = std::filesystem;

namespace speculens {

namespace {

using Bytes = std::vector<std::uint8_t>;
using Png16 = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Raw8 {
  int width = 0, height = 0, channels = 0;
  Bytes data;
};

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

Raw8 read_png8(const fs::path& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raw8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.data.resize(PNG_IMAGE_SIZE(image));
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png8(const fs::path& path, int width, int height, int channels, const Bytes& data) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& in, const fs::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw IoError("malformed PPM header in " + path.string());
  return v;
}

Raw8 read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') throw IoError("not a binary PPM (P6): " + path.string());
  Raw8 out;
  out.width = read_pnm_int(in, path);
  out.height = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (maxval != 255) throw IoError("only 8-bit PPM supported: " + path.string());
  in.get();
  out.channels = 3;
  out.data.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
  if (!in) throw IoError("truncated PPM " + path.string());
  return out;
}

Raw8 read_any(const fs::path& path, int channels) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png8(path, channels);
  if (ext == ".ppm") {
    Raw8 rgb = read_ppm(path);
    if (channels == 3) return rgb;
    Raw8 g{rgb.width, rgb.height, 1, Bytes(static_cast<std::size_t>(rgb.width) * rgb.height)};
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = rgb.data[3 * i];
    return g;
  }
  throw IoError("unsupported image type: " + path.string());
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Bytes interleave(const Frame& f) {
  Bytes data(static_cast<std::size_t>(f.height() * f.width() * 3));
  for (Eigen::Index y = 0; y < f.height(); ++y)
    for (Eigen::Index x = 0; x < f.width(); ++x)
      for (int c = 0; c < 3; ++c) data[static_cast<std::size_t>((y * f.width() + x) * 3 + c)] = to_byte(f[c](y, x));
  return data;
}

}  // namespace

Frame::Frame(Eigen::Index height, Eigen::Index width, double fill) {
  for (auto& p : rgb) p = Plane::Constant(height, width, fill);
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_ext(entry.path());
    if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

Frame load_frame(const fs::path& path) {
  const Raw8 raw = read_any(path, 3);
  Frame f(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c) f[c](y, x) = raw.data[static_cast<std::size_t>((y * raw.width + x) * 3 + c)] / 255.0;
  return f;
}

std::vector<Frame> load_frames(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& p : list_images(dir)) {
    frames.push_back(load_frame(p));
    const Frame& f = frames.back();
    if (f.height() != frames.front().height() || f.width() != frames.front().width()) {
      throw DimensionError("frame " + p.filename().string() + " is " + std::to_string(f.height()) + "x" +
                           std::to_string(f.width()) + ", expected " + std::to_string(frames.front().height()) + "x" +
                           std::to_string(frames.front().width()));
    }
  }
  return frames;
}

Mask load_mask(const fs::path& path) {
  const Raw8 raw = read_any(path, 1);
  Mask m(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x) m(y, x) = raw.data[static_cast<std::size_t>(y * raw.width + x)] > 127 ? 1 : 0;
  return m;
}

std::vector<Mask> load_masks(const fs::path& dir) {
  std::vector<Mask> masks;
  for (const auto& p : list_images(dir)) {
    masks.push_back(load_mask(p));
    if (masks.back().rows() != masks.front().rows() || masks.back().cols() != masks.front().cols()) {
      throw DimensionError("mask " + p.filename().string() + " differs in size from the first mask");
    }
  }
  return masks;
}

void write_frame_png(const fs::path& path, const Frame& frame) {
  write_png8(path, static_cast<int>(frame.width()), static_cast<int>(frame.height()), 3, interleave(frame));
}

void write_frame_ppm(const fs::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  const Bytes data = interleave(frame);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  Bytes data(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index y = 0; y < mask.rows(); ++y)
    for (Eigen::Index x = 0; x < mask.cols(); ++x)
      data[static_cast<std::size_t>(y * mask.cols() + x)] = mask(y, x) ? 255 : 0;
  write_png8(path, static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1, data);
}

Png16 load_png16(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_LINEAR_Y;
  Png16 out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png16(const fs::path& path, const Png16& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols());
  image.height = static_cast<png_uint_32>(img.rows());
  image.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace speculens
