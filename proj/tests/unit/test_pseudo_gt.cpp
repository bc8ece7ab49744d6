#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "speculens/pseudo_gt.hpp"
#include "support/temp_dir.hpp"

using namespace speculens;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

Mask random_blobs(int h, int w, int n, std::mt19937_64& rng) {
  Mask m = Mask::Zero(h, w);
  std::uniform_int_distribution<int> cy(0, h - 1), cx(0, w - 1), rad(1, 4);
  for (int b = 0; b < n; ++b) {
    const int y0 = cy(rng), x0 = cx(rng), r = rad(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((y - y0) * (y - y0) + (x - x0) * (x - x0) <= r * r) m(y, x) = 1;
  }
  return m;
}

// Pixel-by-pixel: out(y, x) = in(y - dy, x - dx) and not in(y, x).
Mask set_difference_oracle(const Mask& in, int dx, int dy) {
  Mask out = Mask::Zero(in.rows(), in.cols());
  for (int y = 0; y < in.rows(); ++y)
    for (int x = 0; x < in.cols(); ++x) {
      const int sy = y - dy, sx = x - dx;
      const bool src = sy >= 0 && sx >= 0 && sy < in.rows() && sx < in.cols() && in(sy, sx);
      out(y, x) = src && !in(y, x);
    }
  return out;
}

std::pair<double, double> centroid(const Mask& m) {
  double sy = 0, sx = 0, n = 0;
  for (int y = 0; y < m.rows(); ++y)
    for (int x = 0; x < m.cols(); ++x)
      if (m(y, x)) {
        sy += y;
        sx += x;
        n += 1;
      }
  return {sy / n, sx / n};
}

}  // namespace

TEST_SUITE("pseudo_gt") {

TEST_CASE("translate_and_clean examples") {
  std::mt19937_64 rng(1);
  const Mask blobs = random_blobs(40, 60, 6, rng);
  CHECK(mask_area(translate_and_clean(blobs, {0, 0})) == 0);

  Mask dot = Mask::Zero(64, 64);
  dot(10, 10) = 1;  // row 10, column 10
  const Mask moved = translate_and_clean(dot, {32, 0});
  CHECK(mask_area(moved) == 1);
  CHECK(moved(10, 42) == 1);

  CHECK((translate_and_clean(blobs, {32, 0}) == set_difference_oracle(blobs, 32, 0)).all());
}

TEST_CASE("translate_and_clean is disjoint from its input") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> off(-30, 30);
  for (int trial = 0; trial < 200; ++trial) {
    const Mask m = random_blobs(32, 40, 1 + trial % 7, rng);
    const int dx = off(rng), dy = off(rng);
    const Mask t = translate_and_clean(m, {dx, dy});
    CHECK_FALSE(((t != 0) && (m != 0)).any());
    CHECK((t == set_difference_oracle(m, dx, dy)).all());
  }
}

TEST_CASE("build_pseudo_gt") {
  const int h = 48, w = 96;
  std::vector<Frame> frames(3, Frame(h, w, 0.4));
  std::vector<Mask> empty(3, Mask::Zero(h, w));
  const VideoSample none = build_pseudo_gt(frames, empty, {32, 0});
  for (const auto& m : none.trans_masks) CHECK(mask_area(m) == 0);

  // A 3x3 blob far from the border: trans area equals the dilated blob area.
  Mask blob = Mask::Zero(h, w);
  blob.block(20, 20, 3, 3) = 1;
  const DilationConfig dil;
  const VideoSample s = build_pseudo_gt(frames, std::vector<Mask>(3, blob), {32, 0}, dil);
  const Eigen::Index want = mask_area(dilate(blob, dil.element(), 1));
  for (const auto& m : s.trans_masks) CHECK(mask_area(m) == want);
  CHECK(s.frames.size() == 3);
  CHECK(s.frames[1] == frames[1]);

  // Blob touching the right border: translated copy is clipped away.
  Mask edge = Mask::Zero(h, w);
  edge.block(10, w - 40, 4, 40) = 1;
  DilationConfig none_dil;
  none_dil.iterations = 0;
  const VideoSample e = build_pseudo_gt({frames[0]}, {edge}, {32, 0}, none_dil);
  const Mask& tm = e.trans_masks[0];
  CHECK(mask_area(tm) == 0);  // every shifted pixel lands on the blob or outside
  Mask partial = Mask::Zero(h, w);
  partial.block(30, w - 20, 5, 20) = 1;
  const Mask tp = build_pseudo_gt({frames[0]}, {partial}, {32, 0}, none_dil).trans_masks[0];
  CHECK(mask_area(tp) == 0);
  Mask near = Mask::Zero(h, w);
  near.block(30, w - 40, 5, 10) = 1;
  const Mask tn = build_pseudo_gt({frames[0]}, {near}, {32, 0}, none_dil).trans_masks[0];
  CHECK(mask_area(tn) == 5 * 8);  // two of the ten shifted columns fall off the edge
  CHECK_FALSE(((tn != 0) && (near != 0)).any());

  CHECK_THROWS_AS(build_pseudo_gt(frames, {blob}, {32, 0}), DimensionError);
}

TEST_CASE("pseudo-GT pixels are never occluded in the source frame") {
  std::mt19937_64 rng(3);
  std::vector<Frame> frames;
  std::vector<Mask> masks;
  for (int t = 0; t < 10; ++t) {
    frames.emplace_back(40, 72, 0.3);
    masks.push_back(random_blobs(40, 72, 4, rng));
  }
  DilationConfig no_dilation;
  no_dilation.iterations = 0;
  const VideoSample s = build_pseudo_gt(frames, masks, {32, 0}, no_dilation);
  for (int t = 0; t < 10; ++t) CHECK_FALSE(((s.trans_masks[t] != 0) && (masks[t] != 0)).any());
}

TEST_CASE("random_continuous_masks") {
  RandomMaskConfig cfg;
  cfg.seed = 17;
  const auto a = random_continuous_masks(6, 64, 64, cfg);
  const auto b = random_continuous_masks(6, 64, 64, cfg);
  REQUIRE(a.size() == 6);
  for (int t = 0; t < 6; ++t) CHECK((a[t] == b[t]).all());
  CHECK(mask_area(a[0]) > 0);

  cfg.max_step = 0;
  const auto frozen = random_continuous_masks(5, 48, 48, cfg);
  for (const auto& m : frozen) CHECK((m == frozen[0]).all());

  cfg.seed = 21;
  cfg.max_step = 2;
  const auto tracks = random_stroke_tracks(10, 64, 64, cfg);
  REQUIRE(tracks.size() == 3);
  const double bound = std::sqrt(2.0) * cfg.max_step + 1e-9;
  for (const auto& track : tracks) {
    for (int t = 1; t < 10; ++t) {
      CHECK(mask_area(track[t]) == mask_area(track[0]));  // never clipped
      const auto [y0, x0] = centroid(track[t - 1]);
      const auto [y1, x1] = centroid(track[t]);
      CHECK(std::hypot(y1 - y0, x1 - x0) <= bound);
    }
  }
  cfg.strokes_per_frame = 1;
  const auto single = random_continuous_masks(10, 64, 64, cfg);
  for (int t = 1; t < 10; ++t) {
    const auto [y0, x0] = centroid(single[t - 1]);
    const auto [y1, x1] = centroid(single[t]);
    CHECK(std::hypot(y1 - y0, x1 - x0) <= bound);
  }

  cfg.brush_width = 0;
  CHECK_THROWS_AS(random_continuous_masks(2, 8, 8, cfg), ConfigError);
}

TEST_CASE("split_dataset") {
  CHECK(split_counts(373, 0.087).train == 343);
  CHECK(split_counts(373, 0.087).test == 30);
  CHECK(split_counts(10, 0.2).train == 8);
  CHECK(split_counts(10, 0.2).test == 2);
  CHECK(split_counts(2, 0.01).test == 1);
  CHECK_THROWS_AS(split_counts(1, 0.2), ParameterError);
  CHECK_THROWS_AS(split_counts(10, 1.0), ParameterError);

  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("v" + std::to_string(i));
  const auto s1 = split_dataset(ids, 0.2, 5), s2 = split_dataset(ids, 0.2, 5), s3 = split_dataset(ids, 0.2, 6);
  CHECK(s1 == s2);
  CHECK(s1 != s3);
  CHECK(std::count(s1.begin(), s1.end(), Split::test) == long(split_counts(40, 0.2).test));
}

TEST_CASE("dataset build writes layout and manifest") {
  TempDir src("src"), out("out");
  for (int v = 0; v < 3; ++v) {
    const fs::path dir = src / ("vid" + std::to_string(v)) / "frames";
    fs::create_directories(dir);
    for (int t = 0; t < 2; ++t) {
      Frame f(40, 50, 0.3);
      f[0].setConstant(0.6);
      for (int c = 0; c < 3; ++c) f[c].block(10 + t, 5, 3, 3) = 1.0;
      write_frame_png(dir / ("img" + std::to_string(t) + ".png"), f);
    }
  }
  DatasetConfig cfg;
  cfg.image_size = 32;
  cfg.offset = {8, 0};
  cfg.test_fraction = 0.5;
  cfg.seed = 3;
  const auto entries = build_dataset(src.path(), out.path(), cfg);
  REQUIRE(entries.size() == 3);
  const auto back = read_manifest(out.path());
  REQUIRE(back.size() == 3);
  CHECK(back[1].id == "vid1");
  CHECK(std::count_if(back.begin(), back.end(), [](const DatasetEntry& e) { return e.split == Split::test; }) == 1);
  CHECK(fs::exists(out / "vid0" / "frames" / "000001.png"));
  const VideoSample s = load_video_sample(out.path(), "vid2");
  CHECK(s.frames.size() == 2);
  CHECK(s.frames[0].height() == 32);
  CHECK(mask_area(s.orig_masks[0]) > 0);
  CHECK(mask_area(s.trans_masks[0]) > 0);

  // Pure function of inputs and seed.
  TempDir again("again");
  build_dataset(src.path(), again.path(), cfg);
  const VideoSample s2 = load_video_sample(again.path(), "vid2");
  CHECK((s2.trans_masks[1] == s.trans_masks[1]).all());
  CHECK(read_manifest(again.path())[0].split == back[0].split);
}

}  // TEST_SUITE
