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
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "speculens/imaging.hpp"

namespace speculens {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// A point in image 1 and its match in image 2, either in pixels or in
/// normalised camera coordinates depending on context.
struct Correspondence {
  Vec2 p1;
  Vec2 p2;
};

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0, skew = 0;

  void validate() const;
  Mat3 matrix() const;
  /// Pixel to normalised image coordinates.
  Vec2 normalize(const Vec2& px) const;
  /// Normalised coordinates back to pixels.
  Vec2 project(const Vec2& xn) const;
};

std::vector<Correspondence> normalize(const std::vector<Correspondence>& px, const CameraIntrinsics& k);

/// x2 = rotation * x1 + translation for a point x1 in camera-1 coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

Mat3 skew(const Vec3& v);
/// [t]x R.
Mat3 essential_from_pose(const Pose& pose);

// --- Features -----------------------------------------------------------------

struct FeatureConfig {
  double harris_k = 0.04;
  /// Gaussian sigma for the structure tensor window.
  double window_sigma = 1.5;
  /// Keep responses above this fraction of the frame's maximum response.
  double relative_threshold = 0.01;
  int nms_radius = 5;
  int max_keypoints = 2000;
  /// Side of the square patch descriptor, odd.
  int patch_size = 11;
};

struct Keypoint {
  double x = 0, y = 0;
  double response = 0;
};

struct Features {
  std::vector<Keypoint> keypoints;
  /// One unit-norm, zero-mean descriptor per row.
  Eigen::MatrixXd descriptors;
};

Features detect_and_describe(const Frame& frame, const FeatureConfig& cfg = {});

struct Match {
  int query = 0;
  int train = 0;
  double distance = 0;
};

/// Nearest neighbour in d2 for each row of d1, kept when its distance is below
/// ratio times the second-nearest distance and the two rows are mutual nearest
/// neighbours.
std::vector<Match> ratio_match(const Eigen::MatrixXd& d1, const Eigen::MatrixXd& d2, double ratio = 0.75);

std::vector<Correspondence> matched_points(const Features& f1, const Features& f2, const std::vector<Match>& matches);

// --- Essential matrix ----------------------------------------------------------

/// Candidate essential matrices (unit Frobenius norm, up to 10) through the
/// first five normalised correspondences, or the least-squares null space when
/// more are given. With zero baseline the system has a continuum of solutions;
/// then [e_k]x R is returned for each axis e_k. Throws DegeneracyError for a
/// rank-deficient configuration.
std::vector<Mat3> five_point_essential(const std::vector<Correspondence>& normalized);

/// First-order geometric error sqrt(Sampson distance) in normalised units.
double sampson_error(const Mat3& E, const Correspondence& c);

struct RansacConfig {
  double threshold = 1e-3;
  double confidence = 0.999;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
  /// Linear refit on all inliers followed by projection onto essential matrices.
  bool refine = false;

  void validate() const;
};

struct RansacResult {
  Mat3 E = Mat3::Zero();
  std::vector<int> inliers;
  int iterations = 0;
};

/// RANSAC over five-point hypotheses on normalised correspondences.
RansacResult ransac_essential(const std::vector<Correspondence>& normalized, const RansacConfig& cfg);
/// Pixel correspondences are normalised with `k` first.
RansacResult ransac_essential(const std::vector<Correspondence>& px, const CameraIntrinsics& k, const RansacConfig& cfg);

/// Closest essential matrix: singular values (1, 1, 0).
Mat3 project_to_essential(const Mat3& m);

/// Linear triangulation with camera 1 at the origin and camera 2 at `pose`.
Vec3 triangulate(const Pose& pose, const Correspondence& c);

struct PoseRecovery {
  Pose pose;
  /// Points in front of both cameras for each of the four decompositions.
  std::array<int, 4> positive_counts{};
  int chosen = 0;
  /// Another candidate reached the same count.
  bool ambiguous = false;
};

/// The four (R, t) decompositions of E in order (R1, t), (R1, -t), (R2, t),
/// (R2, -t); det(R) = +1 and |t| = 1.
std::array<Pose, 4> decompose_essential(const Mat3& E);

/// Cheirality-checked decomposition over normalised inlier correspondences.
PoseRecovery recover_pose(const Mat3& E, const std::vector<Correspondence>& normalized);

// --- Errors against ground truth -------------------------------------------------

/// Angle in degrees between translation directions, in [0, 180]. Absent when
/// either vector is zero.
std::optional<double> rte(const Vec3& t_est, const Vec3& t_gt);
/// Geodesic rotation angle in degrees.
double rre(const Mat3& R_est, const Mat3& R_gt);

/// Relative motion from frame i to frame j given camera-to-world matrices.
Pose relative_pose(const Mat4& cam_to_world_i, const Mat4& cam_to_world_j);

/// (t, t + window) for t = 0 .. length - window - 1; empty with a warning when
/// the sequence is too short.
std::vector<std::pair<int, int>> select_pairs(int length, int window = 20);

// --- Files ---------------------------------------------------------------------

/// One camera-to-world 4x4 matrix per line, 16 numbers in row-major order.
std::vector<Mat4> load_poses(const std::filesystem::path& path);
/// "fx fy cx cy [skew]".
CameraIntrinsics load_intrinsics(const std::filesystem::path& path);
/// CSV with columns x1,y1,x2,y2; a non-numeric first line is a header.
std::vector<Correspondence> load_correspondences(const std::filesystem::path& path);
void write_correspondences(const std::filesystem::path& path, const std::vector<Correspondence>& c);

struct FlowField {
  Plane u;
  Plane v;
};

/// Middlebury .flo, or raw little-endian float32 planes (all u, then all v)
/// for any other extension, which need the size given.
FlowField load_flow(const std::filesystem::path& path, Eigen::Index height = 0, Eigen::Index width = 0);
void write_flow_raw(const std::filesystem::path& path, const FlowField& flow);
/// Grid-subsampled correspondences (x, y) -> (x + u, y + v), finite flow only.
std::vector<Correspondence> flow_correspondences(const FlowField& flow, int stride);

// --- Pair evaluation -------------------------------------------------------------

struct PoseEvalConfig {
  FeatureConfig features;
  double ratio = 0.75;
  RansacConfig ransac;
  int window = 20;
};

struct PairResult {
  int i = 0, j = 0;
  bool ok = false;
  std::optional<double> rte;
  double rre = 0;
  int inliers = 0;
  std::string error;
};

/// Pixel correspondences between frames i and j.
using CorrespondenceSource = std::function<std::vector<Correspondence>(int i, int j)>;

/// Estimates each selected pair and compares with the ground-truth poses.
/// RANSAC for pair index p is seeded with pair_seed(cfg.ransac.seed, p).
/// Failed pairs are logged and returned with ok = false.
std::vector<PairResult> evaluate_pairs(int length, const CorrespondenceSource& source, const std::vector<Mat4>& poses,
                                       const CameraIntrinsics& k, const PoseEvalConfig& cfg);

std::uint64_t pair_seed(std::uint64_t seed, std::uint64_t pair_index);

/// Feature-matching source over in-memory frames.
CorrespondenceSource feature_source(const std::vector<Frame>& frames, const FeatureConfig& features, double ratio);

}  // namespace speculens
