#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <doctest.h>

#include "speculens/geometry.hpp"
#include "support/scene.hpp"
#include "support/temp_dir.hpp"

using namespace speculens;
using testing_support::TempDir;

namespace {

constexpr double kDeg = 180.0 / M_PI;

std::vector<Correspondence> first5(const std::vector<Correspondence>& c) { return {c.begin(), c.begin() + 5}; }

// Exhaustive two-nearest-neighbour matching with mutual check.
std::vector<Match> brute_force_match(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double ratio) {
  std::vector<Match> out;
  for (int i = 0; i < a.rows(); ++i) {
    std::vector<std::pair<double, int>> d;
    for (int j = 0; j < b.rows(); ++j) d.push_back({(a.row(i) - b.row(j)).norm(), j});
    std::sort(d.begin(), d.end());
    const double second = d.size() > 1 ? d[1].first : std::numeric_limits<double>::infinity();
    if (!(d[0].first < ratio * second) && d.size() > 1) continue;
    const int j = d[0].second;
    int back = 0;
    double bd = 1e300;
    for (int k = 0; k < a.rows(); ++k) {
      const double dk = (a.row(k) - b.row(j)).norm();
      if (dk < bd) {
        bd = dk;
        back = k;
      }
    }
    if (back == i) out.push_back({i, j, d[0].first});
  }
  return out;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("five-point recovers the true essential matrix") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = scene::make_scene(rng, scene::random_pose(rng), 5);
    const Mat3 truth = essential_from_pose(s.pose);
    const auto cands = five_point_essential(s.normed);
    REQUIRE(!cands.empty());
    CHECK(cands.size() <= 10);
    CHECK(scene::min_essential_distance(cands, truth) < 1e-6);
    for (const Mat3& E : cands) {
      CHECK(std::abs(E.determinant()) < 1e-8);
      CHECK((2 * E * E.transpose() * E - (E * E.transpose()).trace() * E).norm() < 1e-6);
      for (const auto& c : s.normed) CHECK(std::abs(c.p2.homogeneous().dot(E * c.p1.homogeneous())) < 1e-8);
    }
  }
}

TEST_CASE("five-point degeneracies") {
  std::vector<Correspondence> same(5, Correspondence{Vec2(0.1, 0.2), Vec2(0.3, -0.1)});
  CHECK_THROWS_AS(five_point_essential(same), DegeneracyError);
  CHECK_THROWS_AS(five_point_essential(first5(same).size() == 5 ? std::vector<Correspondence>(4) : same), ParameterError);

  // Pure rotation: no error, even though the translation is meaningless.
  std::mt19937_64 rng(2);
  Pose rot = scene::random_pose(rng);
  rot.translation.setZero();
  const auto s = scene::make_scene(rng, rot, 5);
  std::vector<Mat3> cands;
  CHECK_NOTHROW(cands = five_point_essential(s.normed));
  CHECK_FALSE(cands.empty());
}

TEST_CASE("sampson error") {
  std::mt19937_64 rng(4);
  const auto s = scene::make_scene(rng, scene::random_pose(rng), 10);
  const Mat3 E = essential_from_pose(s.pose);
  for (const auto& c : s.normed) CHECK(sampson_error(E, c) < 1e-12);
  Correspondence off = s.normed[0];
  off.p2.y() += 0.01;
  CHECK(sampson_error(E, off) > 1e-4);
}

TEST_CASE("ransac on synthetic data") {
  std::mt19937_64 rng(21);
  const auto s = scene::make_scene(rng, scene::random_pose(rng), 50);
  RansacConfig cfg;
  cfg.seed = 1;
  const auto r = ransac_essential(s.normed, cfg);
  CHECK(r.inliers.size() == 50);

  // 70% inliers, 30% outliers that disagree with the true model.
  const Mat3 truth = essential_from_pose(s.pose);
  std::vector<Correspondence> mixed;
  std::vector<bool> inlier;
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int i = 0; i < 70; ++i) {
    mixed.push_back(s.normed[static_cast<std::size_t>(i % 50)]);
    inlier.push_back(true);
  }
  while (mixed.size() < 100) {
    const Correspondence o{Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng))};
    if (sampson_error(truth, o) < 1e-2) continue;
    mixed.push_back(o);
    inlier.push_back(false);
  }
  std::shuffle(mixed.begin(), mixed.end(), std::mt19937_64(5));
  std::shuffle(inlier.begin(), inlier.end(), std::mt19937_64(5));
  const auto m = ransac_essential(mixed, cfg);
  std::vector<bool> found(100, false);
  for (int i : m.inliers) found[static_cast<std::size_t>(i)] = true;
  for (int i = 0; i < 100; ++i) CHECK(found[i] == inlier[i]);

  const auto again = ransac_essential(mixed, cfg);
  CHECK(again.inliers == m.inliers);
  CHECK(again.E == m.E);

  CHECK_THROWS_AS(ransac_essential(first5(mixed).size() ? std::vector<Correspondence>(4) : mixed, cfg), ParameterError);
  // Every sample is degenerate, so no model is ever produced.
  const std::vector<Correspondence> junk(20, Correspondence{Vec2(0.1, 0.1), Vec2(0.2, 0.1)});
  RansacConfig few = cfg;
  few.max_iterations = 50;
  CHECK_THROWS_AS(ransac_essential(junk, few), EstimationError);
}

TEST_CASE("recover_pose") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = scene::make_scene(rng, scene::random_pose(rng), 30);
    const Mat3 E = essential_from_pose(s.pose);
    const PoseRecovery rec = recover_pose(E, s.normed);
    CHECK(rec.positive_counts[static_cast<std::size_t>(rec.chosen)] == 30);
    CHECK_FALSE(rec.ambiguous);
    CHECK(rre(rec.pose.rotation, s.pose.rotation) / kDeg < 1e-6);
    CHECK(*rte(rec.pose.translation, s.pose.translation) / kDeg < 1e-6);
    CHECK(std::abs(rec.pose.rotation.determinant() - 1) < 1e-12);
    CHECK(scene::essential_distance(E, essential_from_pose(rec.pose)) < 1e-6);
  }

  // R = I, t = x: exactly one decomposition puts every point in front.
  const Pose simple{Mat3::Identity(), Vec3(1, 0, 0)};
  const auto s = scene::make_scene(rng, simple, 20);
  const PoseRecovery rec = recover_pose(essential_from_pose(simple), s.normed);
  CHECK(std::count(rec.positive_counts.begin(), rec.positive_counts.end(), 20) == 1);
  CHECK((rec.pose.translation - Vec3(1, 0, 0)).norm() < 1e-9);

  // Points behind both cameras: the sign-flipped translation wins instead.
  std::vector<Correspondence> mirrored;
  for (const auto& X : s.points) {
    const Vec3 Y = -X;
    mirrored.push_back({Y.hnormalized(), (Y + simple.translation).hnormalized()});
  }
  const PoseRecovery mir = recover_pose(essential_from_pose(simple), mirrored);
  CHECK(mir.chosen != rec.chosen);
  CHECK(mir.positive_counts[static_cast<std::size_t>(mir.chosen)] == 20);
  CHECK((mir.pose.translation + Vec3(1, 0, 0)).norm() < 1e-9);
}

TEST_CASE("rte and rre") {
  const Vec3 t(0.3, -1, 2);
  CHECK(*rte(t, t) == doctest::Approx(0).epsilon(1e-12));
  CHECK(*rte(-t, t) == doctest::Approx(180.0));
  CHECK(*rte(5 * t, 0.1 * t) == doctest::Approx(0).epsilon(1e-12));
  CHECK(*rte(Vec3(1, 0, 0), Vec3(0, 1, 0)) == doctest::Approx(90.0));
  CHECK_FALSE(rte(t, Vec3::Zero()).has_value());
  const Mat3 rz = scene::axis_angle(Vec3::UnitZ(), 10.0 / kDeg);
  CHECK(rre(rz, Mat3::Identity()) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(rre(rz, rz) == doctest::Approx(0.0));
}

TEST_CASE("relative pose from camera-to-world matrices") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Mat4 Ti = Mat4::Identity(), Tj = Mat4::Identity();
    Ti.topLeftCorner<3, 3>() = scene::random_pose(rng).rotation;
    Tj.topLeftCorner<3, 3>() = scene::random_pose(rng).rotation;
    Ti.topRightCorner<3, 1>() = Vec3::Random();
    Tj.topRightCorner<3, 1>() = Vec3::Random();
    const Pose rel = relative_pose(Ti, Tj);
    const Vec3 Xi(0.4, -0.2, 3.0);
    const Eigen::Vector4d Xw = Ti * Xi.homogeneous();
    const Vec3 Xj = (Tj.inverse() * Xw).head<3>();
    CHECK((rel.rotation * Xi + rel.translation - Xj).norm() < 1e-12);
  }
}

TEST_CASE("select_pairs") {
  CHECK(select_pairs(735, 20).size() == 715);
  const auto one = select_pairs(21, 20);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == std::make_pair(0, 20));
  CHECK(select_pairs(20, 20).empty());
}

TEST_CASE("harris detector and descriptors") {
  CHECK(detect_and_describe(Frame(64, 64, 0.5)).keypoints.empty());

  Frame sq(64, 64, 0.0);
  for (int c = 0; c < 3; ++c) sq[c].block(20, 24, 20, 16) = 1.0;  // rows 20..39, cols 24..39
  const Features f = detect_and_describe(sq);
  const std::vector<Vec2> corners = {{24, 20}, {39, 20}, {24, 39}, {39, 39}};
  std::vector<int> hits(4, 0);
  for (const auto& kp : f.keypoints) {
    int nearest = -1;
    for (int k = 0; k < 4; ++k)
      if ((Vec2(kp.x, kp.y) - corners[static_cast<std::size_t>(k)]).norm() <= 3.0) nearest = k;
    CHECK(nearest >= 0);
    if (nearest >= 0) ++hits[static_cast<std::size_t>(nearest)];
  }
  for (int k = 0; k < 4; ++k) CHECK(hits[static_cast<std::size_t>(k)] == 1);

  std::mt19937_64 rng(3);
  Frame tex(48, 48);
  for (auto& p : tex.rgb) p = (Plane::Random(48, 48) + 1.0) / 2.0;
  const Features t = detect_and_describe(tex);
  CHECK(t.keypoints.size() > 5);
  for (Eigen::Index i = 0; i < t.descriptors.rows(); ++i) {
    CHECK(std::abs(t.descriptors.row(i).norm() - 1.0) < 1e-9);
    CHECK(std::abs(t.descriptors.row(i).sum()) < 1e-9);
  }
}

TEST_CASE("ratio_match") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
  const auto m = ratio_match(eye, eye);
  REQUIRE(m.size() == 6);
  for (const auto& x : m) CHECK(x.query == x.train);
  CHECK(ratio_match(eye, eye, 0.0).empty());

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd a(30, 8), b(25, 8);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
    b.topRows(10) = a.topRows(10) + 0.05 * Eigen::MatrixXd::Random(10, 8);
    const auto got = ratio_match(a, b, 0.8);
    const auto want = brute_force_match(a, b, 0.8);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].query == want[k].query);
      CHECK(got[k].train == want[k].train);
      CHECK(got[k].distance == doctest::Approx(want[k].distance).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(ratio_match(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 4)), DimensionError);
}

TEST_CASE("noisy end-to-end pixel pipeline") {
  std::mt19937_64 rng(31);
  std::vector<double> rres, rtes;
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = scene::make_pixel_scene(rng, 200, 0.25, 0.2);
    RansacConfig cfg;
    cfg.seed = trial;
    cfg.refine = true;
    const auto fit = ransac_essential(s.px, s.k, cfg);
    const auto pts = normalize(s.px, s.k);
    std::vector<Correspondence> in;
    for (int i : fit.inliers) in.push_back(pts[static_cast<std::size_t>(i)]);
    const auto rec = recover_pose(fit.E, in);
    rres.push_back(rre(rec.pose.rotation, s.view.pose.rotation));
    rtes.push_back(*rte(rec.pose.translation, s.view.pose.translation));
  }
  std::sort(rres.begin(), rres.end());
  std::sort(rtes.begin(), rtes.end());
  MESSAGE("median RRE " << rres[5] << " deg, median RTE " << rtes[5] << " deg");
  CHECK(rres[5] < 0.1);
  CHECK(rtes[5] < 0.5);
}

TEST_CASE("geometry files") {
  TempDir dir("geo");
  {
    std::ofstream p(dir / "poses.txt");
    p << "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n# comment\n1,0,0,2,0,1,0,0,0,0,1,0,0,0,0,1\n";
    std::ofstream k(dir / "k.txt");
    k << "500 510 320 240\n";
    std::ofstream bad(dir / "bad.txt");
    bad << "1 2 3\n";
  }
  const auto poses = load_poses(dir / "poses.txt");
  REQUIRE(poses.size() == 2);
  CHECK(poses[1](0, 3) == 2.0);
  const auto k = load_intrinsics(dir / "k.txt");
  CHECK(k.fx == 500);
  CHECK(k.cy == 240);
  CHECK((k.project(k.normalize(Vec2(12.5, 99))) - Vec2(12.5, 99)).norm() < 1e-12);
  CHECK_THROWS_AS(load_poses(dir / "bad.txt"), IoError);
  CHECK_THROWS_AS(load_intrinsics(dir / "missing.txt"), IoError);

  const std::vector<Correspondence> c = {{Vec2(1.5, 2), Vec2(3, 4.25)}, {Vec2(0.1, 0.2), Vec2(0.3, 0.4)}};
  write_correspondences(dir / "c.csv", c);
  const auto back = load_correspondences(dir / "c.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].p2 == c[1].p2);

  FlowField f{Plane::Constant(3, 4, 1.5), Plane::Constant(3, 4, -2.0)};
  write_flow_raw(dir / "f.bin", f);
  const auto raw = load_flow(dir / "f.bin", 3, 4);
  CHECK((raw.u == 1.5).all());
  CHECK((raw.v == -2.0).all());
  CHECK_THROWS_AS(load_flow(dir / "f.bin"), IoError);
  const auto fc = flow_correspondences(raw, 2);
  REQUIRE(fc.size() == 4);
  CHECK(fc[1].p1 == Vec2(2, 0));
  CHECK(fc[1].p2 == Vec2(3.5, -2));

  {
    std::ofstream flo(dir / "f.flo", std::ios::binary);
    const float magic = 202021.25f;
    const std::int32_t w = 2, h = 1;
    const float data[4] = {1, 2, 3, 4};
    flo.write(reinterpret_cast<const char*>(&magic), 4);
    flo.write(reinterpret_cast<const char*>(&w), 4);
    flo.write(reinterpret_cast<const char*>(&h), 4);
    flo.write(reinterpret_cast<const char*>(data), 16);
  }
  const auto mid = load_flow(dir / "f.flo");
  CHECK(mid.u(0, 1) == 3);
  CHECK(mid.v(0, 1) == 4);
}

TEST_CASE("pair evaluation over a synthetic sequence") {
  // Camera translating along x while looking at a fixed point cloud.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> xy(-3, 3), z(6, 12);
  std::vector<Vec3> world;
  for (int i = 0; i < 150; ++i) world.emplace_back(xy(rng), xy(rng), z(rng));
  const int length = 25;
  std::vector<Mat4> poses;
  for (int f = 0; f < length; ++f) {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = scene::axis_angle(Vec3::UnitY(), 0.01 * f);
    T.topRightCorner<3, 1>() = Vec3(0.1 * f, 0.02 * f, 0);
    poses.push_back(T);
  }
  const CameraIntrinsics k{500, 500, 320, 240, 0};
  CorrespondenceSource src = [&](int i, int j) {
    std::vector<Correspondence> out;
    for (const auto& Xw : world) {
      const Vec3 a = (poses[i].inverse() * Xw.homogeneous()).head<3>();
      const Vec3 b = (poses[j].inverse() * Xw.homogeneous()).head<3>();
      out.push_back({k.project(a.hnormalized()), k.project(b.hnormalized())});
    }
    return out;
  };
  PoseEvalConfig cfg;
  const auto res = evaluate_pairs(length, src, poses, k, cfg);
  REQUIRE(res.size() == 5);
  for (const auto& r : res) {
    CHECK(r.ok);
    CHECK(r.inliers == 150);
    CHECK(r.rre < 1e-4);
    CHECK(*r.rte < 1e-3);
  }
  CHECK(pair_seed(1, 0) != pair_seed(1, 1));
  CHECK(pair_seed(1, 0) != pair_seed(2, 0));
}

}  // TEST_SUITE
