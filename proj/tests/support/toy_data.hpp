#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "speculens/imaging.hpp"
#include "speculens/pseudo_gt.hpp"
#include "speculens/sttn.hpp"

namespace testing_support {

using namespace speculens;

/// Small generator used by the training tests: 32x32 frames, 8x8 features.
inline ModelConfig toy_model() {
  ModelConfig m;
  m.image_size = 32;
  m.channels = 32;
  m.layers = 2;
  m.heads = {{8, 8}, {4, 4}, {2, 2}, {1, 1}};
  m.encoder_width1 = 16;
  m.encoder_width2 = 32;
  m.decoder_width = 16;
  m.disc_width1 = 16;
  m.disc_width2 = 32;
  return m;
}

/// Even smaller model for tests that only need the plumbing.
inline ModelConfig tiny_model() {
  ModelConfig m;
  m.image_size = 16;
  m.channels = 8;
  m.layers = 1;
  m.heads = {{4, 4}, {2, 2}};
  m.encoder_width1 = 4;
  m.encoder_width2 = 8;
  m.decoder_width = 4;
  m.disc_width1 = 4;
  m.disc_width2 = 4;
  return m;
}

/// Smooth three-channel pattern translating 1.5 px per frame, with a disc of
/// radius sqrt(20) moving diagonally as the hole.
inline VideoSample overfit_clip(int size = 32, int length = 8) {
  VideoSample v;
  v.id = "toy";
  for (int t = 0; t < length; ++t) {
    Frame f(size, size);
    Mask m = Mask::Zero(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double u = x + 1.5 * t, w = y;
        f[0](y, x) = 0.5 + 0.35 * std::sin(u * 0.45) * std::cos(w * 0.3);
        f[1](y, x) = 0.4 + 0.3 * std::cos(u * 0.25 + w * 0.2);
        f[2](y, x) = 0.3 + 0.2 * std::sin(w * 0.5 - u * 0.1);
        const int cy = 10 + t, cx = 6 + 2 * t;
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= 20) m(y, x) = 1;
      }
    v.frames.push_back(f);
    v.trans_masks.push_back(m);
    v.orig_masks.push_back(Mask::Zero(size, size));
  }
  return v;
}

/// Two identical 32x32 frames of random 4x4 colour blocks; a 12x12 hole at a
/// random position in frame 1 only.
inline VideoSample occlusion_clip(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0, 1);
  std::uniform_int_distribution<int> pos(2, 18);
  Frame f(32, 32);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx)
      for (int c = 0; c < 3; ++c) f[c].block(4 * by, 4 * bx, 4, 4).setConstant(unit(rng));
  Mask hole = Mask::Zero(32, 32);
  const int y0 = pos(rng), x0 = pos(rng);
  hole.block(y0, x0, 12, 12).setOnes();
  VideoSample v;
  v.id = "occlusion";
  v.frames = {f, f};
  v.trans_masks = {Mask::Zero(32, 32), hole};
  v.orig_masks = v.trans_masks;
  return v;
}

/// Reddish shaded tissue with achromatic highlights that drift between frames.
inline Frame tissue_frame(int h, int w, int t, std::uint64_t video) {
  std::mt19937_64 rng(video * 7919 + 13);
  std::uniform_real_distribution<double> u(0, 1);
  const double fx = 0.05 + 0.1 * u(rng), fy = 0.05 + 0.1 * u(rng), ph = 6.28 * u(rng);
  struct Spot {
    double y, x, vy, vx, sigma;
  };
  std::vector<Spot> spots;
  for (int k = 0; k < 3; ++k)
    spots.push_back({0.2 * h + 0.6 * h * u(rng), 0.2 * w + 0.6 * w * u(rng), 2 * u(rng) - 1, 2 * u(rng) - 1,
                     1.5 + 1.5 * u(rng)});
  Frame f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double shade = 0.45 + 0.15 * std::sin(fx * (x + 2 * t) + ph) * std::cos(fy * y) + 0.1 * x / w;
      double spec = 0;
      for (const auto& s : spots) {
        const double dy = y - (s.y + s.vy * t), dx = x - (s.x + s.vx * t);
        spec += 1.2 * std::exp(-(dy * dy + dx * dx) / (2 * s.sigma * s.sigma));
      }
      f[0](y, x) = std::min(1.0, 0.85 * shade + spec);
      f[1](y, x) = std::min(1.0, 0.35 * shade + spec);
      f[2](y, x) = std::min(1.0, 0.3 * shade + spec);
    }
  return f;
}

/// <dir>/vidNN/frames/%06d.png for `videos` clips of `length` frames.
inline void write_toy_videos(const std::filesystem::path& dir, int videos, int length, int size = 64) {
  for (int v = 0; v < videos; ++v) {
    char name[16];
    std::snprintf(name, sizeof name, "vid%02d", v);
    const auto frames = dir / name / "frames";
    std::filesystem::create_directories(frames);
    for (int t = 0; t < length; ++t) {
      char file[16];
      std::snprintf(file, sizeof file, "%06d.png", t);
      write_frame_png(frames / file, tissue_frame(size, size, t, static_cast<std::uint64_t>(v)));
    }
  }
}

/// Means of consecutive non-overlapping blocks of `window` values.
inline std::vector<double> block_means(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= v.size(); i += window) {
    double s = 0;
    for (std::size_t k = i; k < i + window; ++k) s += v[k];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

}  // namespace testing_support
