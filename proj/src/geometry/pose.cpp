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
#include <random>

#include <spdlog/spdlog.h>

#include "speculens/geometry.hpp"

namespace speculens {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: fx and fy must be > 0");
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Vec2 CameraIntrinsics::normalize(const Vec2& px) const {
  const double yn = (px.y() - cy) / fy;
  return {(px.x() - cx - skew * yn) / fx, yn};
}

Vec2 CameraIntrinsics::project(const Vec2& xn) const {
  return {fx * xn.x() + skew * xn.y() + cx, fy * xn.y() + cy};
}

std::vector<Correspondence> normalize(const std::vector<Correspondence>& px, const CameraIntrinsics& k) {
  k.validate();
  std::vector<Correspondence> out;
  out.reserve(px.size());
  for (const auto& c : px) out.push_back({k.normalize(c.p1), k.normalize(c.p2)});
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 essential_from_pose(const Pose& pose) { return skew(pose.translation) * pose.rotation; }

double sampson_error(const Mat3& E, const Correspondence& c) {
  const Vec3 a(c.p1.x(), c.p1.y(), 1.0), b(c.p2.x(), c.p2.y(), 1.0);
  const Vec3 Ea = E * a, Etb = E.transpose() * b;
  const double num = b.dot(Ea);
  const double den = Ea.x() * Ea.x() + Ea.y() * Ea.y() + Etb.x() * Etb.x() + Etb.y() * Etb.y();
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

void RansacConfig::validate() const {
  if (!(threshold > 0.0)) throw ConfigError("geometry.ransac_threshold must be > 0");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("geometry.ransac_confidence must be in (0, 1)");
  if (max_iterations < 1) throw ConfigError("geometry.ransac_max_iterations must be >= 1");
}

Mat3 project_to_essential(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 e = svd.matrixU() * Vec3(1, 1, 0).asDiagonal() * svd.matrixV().transpose();
  return e / e.norm();
}

namespace {

struct Score {
  int inliers = 0;
  double residual = std::numeric_limits<double>::infinity();
};

Score score(const Mat3& E, const std::vector<Correspondence>& pts, double threshold, std::vector<int>* inliers) {
  Score s{0, 0.0};
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double e = sampson_error(E, pts[i]);
    if (e < threshold) {
      ++s.inliers;
      s.residual += e;
      if (inliers) inliers->push_back(static_cast<int>(i));
    }
  }
  return s;
}

bool better(const Score& a, const Score& b) {
  return a.inliers > b.inliers || (a.inliers == b.inliers && a.residual < b.residual);
}

// Eight-point linear fit projected onto the essential manifold.
Mat3 linear_refit(const std::vector<Correspondence>& pts, const std::vector<int>& idx) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(idx.size()), 9);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& c = pts[static_cast<std::size_t>(idx[i])];
    const Vec3 a(c.p1.x(), c.p1.y(), 1.0), b(c.p2.x(), c.p2.y(), 1.0);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) A(static_cast<Eigen::Index>(i), 3 * r + k) = b(r) * a(k);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) m(r, k) = e(3 * r + k);
  return project_to_essential(m);
}

}  // namespace

RansacResult ransac_essential(const std::vector<Correspondence>& pts, const RansacConfig& cfg) {
  cfg.validate();
  if (pts.size() < 5) throw ParameterError("ransac_essential needs at least 5 correspondences, got " + std::to_string(pts.size()));
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = pts.size();
  RansacResult best;
  Score best_score{0, std::numeric_limits<double>::infinity()};
  double needed = static_cast<double>(cfg.max_iterations);
  std::vector<Correspondence> sample(5);
  int it = 0;
  while (it < cfg.max_iterations && it < needed) {
    ++it;
    std::array<std::size_t, 5> idx{};
    for (int k = 0; k < 5; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(rng() % n);
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      }
      sample[static_cast<std::size_t>(k)] = pts[idx[static_cast<std::size_t>(k)]];
    }
    std::vector<Mat3> candidates;
    try {
      candidates = five_point_essential(sample);
    } catch (const DegeneracyError&) {
      continue;
    }
    for (const Mat3& E : candidates) {
      const Score s = score(E, pts, cfg.threshold, nullptr);
      if (better(s, best_score)) {
        best_score = s;
        best.E = E;
        const double w = static_cast<double>(s.inliers) / static_cast<double>(n);
        const double miss = 1.0 - std::pow(w, 5);
        if (miss <= 0.0) {
          needed = 0;
        } else if (miss < 1.0) {
          needed = std::log(1.0 - cfg.confidence) / std::log(miss);
        }
      }
    }
  }
  best.iterations = it;
  if (best_score.inliers < 5) throw EstimationError("ransac_essential: no model with at least 5 inliers");
  score(best.E, pts, cfg.threshold, &best.inliers);
  // Refit until the inlier set stops growing.
  for (int round = 0; cfg.refine && round < 5 && best.inliers.size() >= 8; ++round) {
    const Mat3 refit = linear_refit(pts, best.inliers);
    std::vector<int> refit_inliers;
    const Score s = score(refit, pts, cfg.threshold, &refit_inliers);
    if (s.inliers < best_score.inliers) break;
    const bool grew = s.inliers > best_score.inliers;
    best.E = refit;
    best.inliers = std::move(refit_inliers);
    best_score = s;
    if (!grew) break;
  }
  return best;
}

RansacResult ransac_essential(const std::vector<Correspondence>& px, const CameraIntrinsics& k, const RansacConfig& cfg) {
  return ransac_essential(normalize(px, k), cfg);
}

Vec3 triangulate(const Pose& pose, const Correspondence& c) {
  Eigen::Matrix<double, 3, 4> P1 = Eigen::Matrix<double, 3, 4>::Zero(), P2;
  P1.leftCols<3>() = Mat3::Identity();
  P2.leftCols<3>() = pose.rotation;
  P2.col(3) = pose.translation;
  Eigen::Matrix4d A;
  A.row(0) = c.p1.x() * P1.row(2) - P1.row(0);
  A.row(1) = c.p1.y() * P1.row(2) - P1.row(1);
  A.row(2) = c.p2.x() * P2.row(2) - P2.row(0);
  A.row(3) = c.p2.y() * P2.row(2) - P2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-15) return Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  return X.head<3>() / X(3);
}

std::array<Pose, 4> decompose_essential(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU(), V = svd.matrixV();
  if (U.determinant() < 0) U = -U;
  if (V.determinant() < 0) V = -V;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 R1 = U * W * V.transpose(), R2 = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2).normalized();
  return {Pose{R1, t}, Pose{R1, -t}, Pose{R2, t}, Pose{R2, -t}};
}

PoseRecovery recover_pose(const Mat3& E, const std::vector<Correspondence>& pts) {
  const auto candidates = decompose_essential(E);
  PoseRecovery out;
  for (int k = 0; k < 4; ++k) {
    int count = 0;
    for (const auto& c : pts) {
      const Vec3 X = triangulate(candidates[static_cast<std::size_t>(k)], c);
      if (!X.allFinite()) continue;
      const double z2 = (candidates[static_cast<std::size_t>(k)].rotation * X + candidates[static_cast<std::size_t>(k)].translation).z();
      if (X.z() > 0 && z2 > 0) ++count;
    }
    out.positive_counts[static_cast<std::size_t>(k)] = count;
  }
  out.chosen = 0;
  for (int k = 1; k < 4; ++k)
    if (out.positive_counts[static_cast<std::size_t>(k)] > out.positive_counts[static_cast<std::size_t>(out.chosen)]) out.chosen = k;
  for (int k = 0; k < 4; ++k)
    if (k != out.chosen && out.positive_counts[static_cast<std::size_t>(k)] == out.positive_counts[static_cast<std::size_t>(out.chosen)])
      out.ambiguous = true;
  out.pose = candidates[static_cast<std::size_t>(out.chosen)];
  return out;
}

std::optional<double> rte(const Vec3& t_est, const Vec3& t_gt) {
  const double a = t_est.norm(), b = t_gt.norm();
  if (!(a > 0.0) || !(b > 0.0)) return std::nullopt;
  return std::atan2(t_est.cross(t_gt).norm(), t_est.dot(t_gt)) * kRadToDeg;
}

double rre(const Mat3& R_est, const Mat3& R_gt) {
  const double c = ((R_est.transpose() * R_gt).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

Pose relative_pose(const Mat4& Ti, const Mat4& Tj) {
  const Mat3 Ri = Ti.topLeftCorner<3, 3>(), Rj = Tj.topLeftCorner<3, 3>();
  const Vec3 ti = Ti.topRightCorner<3, 1>(), tj = Tj.topRightCorner<3, 1>();
  return {Rj.transpose() * Ri, Rj.transpose() * (ti - tj)};
}

std::vector<std::pair<int, int>> select_pairs(int length, int window) {
  if (window < 1) throw ParameterError("select_pairs: window must be >= 1");
  std::vector<std::pair<int, int>> pairs;
  if (length <= window) {
    spdlog::warn("sequence of {} frames is too short for a {}-frame window; no pairs", length, window);
    return pairs;
  }
  for (int t = 0; t + window < length; ++t) pairs.emplace_back(t, t + window);
  return pairs;
}

std::uint64_t pair_seed(std::uint64_t seed, std::uint64_t pair_index) {
  // splitmix64 finaliser over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (pair_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<PairResult> evaluate_pairs(int length, const CorrespondenceSource& source, const std::vector<Mat4>& poses,
                                       const CameraIntrinsics& k, const PoseEvalConfig& cfg) {
  k.validate();
  if (static_cast<int>(poses.size()) < length) {
    throw DimensionError("evaluate_pairs: " + std::to_string(poses.size()) + " poses for " + std::to_string(length) + " frames");
  }
  std::vector<PairResult> results;
  const auto pairs = select_pairs(length, cfg.window);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    PairResult r;
    r.i = pairs[p].first;
    r.j = pairs[p].second;
    try {
      const auto pts = normalize(source(r.i, r.j), k);
      RansacConfig rc = cfg.ransac;
      rc.seed = pair_seed(cfg.ransac.seed, p);
      const RansacResult fit = ransac_essential(pts, rc);
      std::vector<Correspondence> in;
      in.reserve(fit.inliers.size());
      for (int idx : fit.inliers) in.push_back(pts[static_cast<std::size_t>(idx)]);
      const PoseRecovery rec = recover_pose(fit.E, in);
      const Pose gt = relative_pose(poses[static_cast<std::size_t>(r.i)], poses[static_cast<std::size_t>(r.j)]);
      r.rte = rte(rec.pose.translation, gt.translation);
      r.rre = rre(rec.pose.rotation, gt.rotation);
      r.inliers = static_cast<int>(fit.inliers.size());
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
      spdlog::warn("pair ({}, {}) skipped: {}", r.i, r.j, r.error);
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace speculens
