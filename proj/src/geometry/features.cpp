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
#include <limits>
#include <memory>
#include <numeric>

#include "speculens/geometry.hpp"

namespace speculens {

using Eigen::Index;

namespace {

Plane gaussian_blur(const Plane& in, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= s;
  const Index h = in.rows(), w = in.cols();
  Plane tmp(h, w), out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * in(y, std::clamp<Index>(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp(std::clamp<Index>(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

Plane harris_response(const Plane& g, const FeatureConfig& cfg) {
  const Index h = g.rows(), w = g.cols();
  Plane ix = Plane::Zero(h, w), iy = Plane::Zero(h, w);
  // Sobel gradients, replicated border.
  auto at = [&](Index y, Index x) { return g(std::clamp<Index>(y, 0, h - 1), std::clamp<Index>(x, 0, w - 1)); };
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      ix(y, x) = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1)) / 8.0;
      iy(y, x) = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1)) / 8.0;
    }
  const Plane a = gaussian_blur(ix * ix, cfg.window_sigma);
  const Plane b = gaussian_blur(iy * iy, cfg.window_sigma);
  const Plane c = gaussian_blur(ix * iy, cfg.window_sigma);
  return a * b - c * c - cfg.harris_k * (a + b) * (a + b);
}

}  // namespace

Features detect_and_describe(const Frame& frame, const FeatureConfig& cfg) {
  if (cfg.patch_size < 1 || cfg.patch_size % 2 == 0) throw ConfigError("geometry.patch_size must be a positive odd integer");
  Features out;
  const Index h = frame.height(), w = frame.width();
  const int half = cfg.patch_size / 2;
  if (h < cfg.patch_size || w < cfg.patch_size) {
    out.descriptors.resize(0, cfg.patch_size * cfg.patch_size);
    return out;
  }
  const Plane gray = frame.gray();
  const Plane resp = harris_response(gray, cfg);
  const double peak = resp.maxCoeff();
  const double floor_value = std::max(cfg.relative_threshold * peak, 1e-12);

  struct Cand {
    Index y, x;
    double r;
  };
  std::vector<Cand> cands;
  const int nr = cfg.nms_radius;
  for (Index y = half; y < h - half; ++y)
    for (Index x = half; x < w - half; ++x) {
      const double r = resp(y, x);
      if (!(r > floor_value)) continue;
      bool is_max = true;
      for (Index dy = -nr; dy <= nr && is_max; ++dy)
        for (Index dx = -nr; dx <= nr; ++dx) {
          const Index yy = y + dy, xx = x + dx;
          if ((dy == 0 && dx == 0) || yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          const double o = resp(yy, xx);
          // Plateau ties go to the first pixel in raster order.
          if (o > r || (o == r && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (is_max) cands.push_back({y, x, r});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.r > b.r; });

  const int dim = cfg.patch_size * cfg.patch_size;
  std::vector<Eigen::VectorXd> desc;
  for (const auto& c : cands) {
    if (static_cast<int>(desc.size()) >= cfg.max_keypoints) break;
    Eigen::VectorXd d(dim);
    int k = 0;
    for (int dy = -half; dy <= half; ++dy)
      for (int dx = -half; dx <= half; ++dx) d(k++) = gray(c.y + dy, c.x + dx);
    d.array() -= d.mean();
    const double n = d.norm();
    if (!(n > 1e-12)) continue;
    desc.push_back(d / n);
    out.keypoints.push_back({static_cast<double>(c.x), static_cast<double>(c.y), c.r});
  }
  out.descriptors.resize(static_cast<Index>(desc.size()), dim);
  for (std::size_t i = 0; i < desc.size(); ++i) out.descriptors.row(static_cast<Index>(i)) = desc[i].transpose();
  return out;
}

std::vector<Match> ratio_match(const Eigen::MatrixXd& d1, const Eigen::MatrixXd& d2, double ratio) {
  if (d1.rows() > 0 && d2.rows() > 0 && d1.cols() != d2.cols()) {
    throw DimensionError("ratio_match: descriptor sizes " + std::to_string(d1.cols()) + " and " + std::to_string(d2.cols()));
  }
  std::vector<Match> out;
  if (d1.rows() == 0 || d2.rows() == 0 || !(ratio > 0.0)) return out;
  // Squared distances via |a|^2 + |b|^2 - 2 a.b.
  const Eigen::VectorXd n1 = d1.rowwise().squaredNorm(), n2 = d2.rowwise().squaredNorm();
  Eigen::MatrixXd dist = (-2.0 * d1 * d2.transpose()).colwise() + n1;
  dist.rowwise() += n2.transpose();
  dist = dist.cwiseMax(0.0).cwiseSqrt();

  std::vector<Index> back(static_cast<std::size_t>(d2.rows()));
  for (Index j = 0; j < d2.rows(); ++j) dist.col(j).minCoeff(&back[static_cast<std::size_t>(j)]);
  for (Index i = 0; i < d1.rows(); ++i) {
    Index best = 0;
    double first = std::numeric_limits<double>::infinity(), second = first;
    for (Index j = 0; j < d2.rows(); ++j) {
      const double d = dist(i, j);
      if (d < first) {
        second = first;
        first = d;
        best = j;
      } else if (d < second) {
        second = d;
      }
    }
    const bool passes = std::isinf(second) ? true : first < ratio * second;
    if (passes && back[static_cast<std::size_t>(best)] == i) out.push_back({static_cast<int>(i), static_cast<int>(best), first});
  }
  return out;
}

std::vector<Correspondence> matched_points(const Features& f1, const Features& f2, const std::vector<Match>& matches) {
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    const auto& a = f1.keypoints.at(static_cast<std::size_t>(m.query));
    const auto& b = f2.keypoints.at(static_cast<std::size_t>(m.train));
    out.push_back({Vec2(a.x, a.y), Vec2(b.x, b.y)});
  }
  return out;
}

CorrespondenceSource feature_source(const std::vector<Frame>& frames, const FeatureConfig& features, double ratio) {
  auto cache = std::make_shared<std::vector<std::unique_ptr<Features>>>(frames.size());
  return [&frames, features, ratio, cache](int i, int j) {
    auto get = [&](int k) -> const Features& {
      auto& slot = (*cache).at(static_cast<std::size_t>(k));
      if (!slot) slot = std::make_unique<Features>(detect_and_describe(frames[static_cast<std::size_t>(k)], features));
      return *slot;
    };
    const Features& a = get(i);
    const Features& b = get(j);
    return matched_points(a, b, ratio_match(a.descriptors, b.descriptors, ratio));
  };
}

}  // namespace speculens
