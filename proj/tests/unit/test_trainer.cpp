#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "speculens/trainer.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_data.hpp"

using namespace speculens;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

VideoSample tiny_video(const std::string& id, int length, std::uint64_t seed, Split split = Split::train) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  VideoSample v;
  v.id = id;
  v.split = split;
  for (int t = 0; t < length; ++t) {
    Frame f(16, 16);
    for (int c = 0; c < 3; ++c)
      for (Eigen::Index i = 0; i < f[c].size(); ++i) f[c].data()[i] = u(rng);
    Mask m = Mask::Zero(16, 16);
    m.block(4 + t % 3, 3 + t % 5, 5, 6).setOnes();
    v.frames.push_back(f);
    v.orig_masks.push_back(Mask::Zero(16, 16));
    v.trans_masks.push_back(m);
  }
  return v;
}

TrainConfig tiny_train(Preset p = Preset::S_C) {
  TrainConfig c;
  c.preset = p;
  c.clip_length = 4;
  c.seed = 7;
  c.random_masks.brush_width = 3;
  c.random_masks.strokes_per_frame = 2;
  return c;
}

template <typename S>
std::vector<S> vals(const Tensor<S>& t) {
  return {t.values().begin(), t.values().end()};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Error of `d` in every channel of every masked pixel.
Frame offset_frame(const Frame& f, double d) {
  Frame g = f;
  for (int c = 0; c < 3; ++c) g[c] = f[c] + d;
  return g;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("preset table") {
  CHECK(preset_traits(Preset::S_R).random_masks);
  CHECK_FALSE(preset_traits(Preset::S_R).transfer);
  CHECK_FALSE(preset_traits(Preset::S_C).random_masks);
  CHECK_FALSE(preset_traits(Preset::S_C).transfer);
  CHECK(preset_traits(Preset::T_C).transfer);
  CHECK_FALSE(preset_traits(Preset::T_C).single_frame);
  CHECK(preset_traits(Preset::T_C_NT).transfer);
  CHECK(preset_traits(Preset::T_C_NT).single_frame);
  for (Preset p : {Preset::S_R, Preset::S_C, Preset::T_C, Preset::T_C_NT}) CHECK(parse_preset(preset_name(p)) == p);
  CHECK_THROWS_AS(parse_preset("T_X"), ConfigError);

  TrainConfig c;
  c.preset = Preset::T_C_NT;
  c.init_checkpoint = "x.bin";
  CHECK(c.single_frame());
  CHECK(c.effective_sampling().neighbor_radius == 0);
  CHECK(c.effective_sampling().distant_stride == c.sampling.distant_stride);
  c.preset = Preset::T_C;
  CHECK(c.effective_sampling().neighbor_radius == c.sampling.neighbor_radius);
}

TEST_CASE("transfer presets need an init checkpoint") {
  TrainConfig c;
  c.preset = Preset::T_C;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("init_checkpoint"), ConfigError);
  c.preset = Preset::T_C_NT;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.init_checkpoint = "s_r.bin";
  CHECK_NOTHROW(c.validate());
  c.clip_length = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("clip_length"), ConfigError);
  CHECK_THROWS_AS(Trainer<float>(testing_support::tiny_model(), c), ConfigError);
}

TEST_CASE("sample_training_window") {
  const VideoSample v = tiny_video("v", 10, 1);
  const auto w = sample_training_window<double>(v.frames, v.trans_masks, 5, {2, 4});
  CHECK(w.indices == std::vector<int>{0, 3, 4, 5, 6, 7, 8});
  CHECK(w.center == 5);
  REQUIRE(w.frames.shape() == Shape{7, 3, 16, 16});
  REQUIRE(w.masks.shape() == Shape{7, 1, 16, 16});
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    const auto src = static_cast<std::size_t>(w.indices[k]);
    CHECK(w.frames.at({Index(k), 1, 3, 2}) == v.frames[src][1](3, 2));
    CHECK(w.masks.at({Index(k), 0, 6, 6}) == v.trans_masks[src](6, 6));
  }
  CHECK(sample_training_window<float>(v.frames, v.trans_masks, 5, {2, 4}, true).indices == std::vector<int>{5});
  CHECK(sample_training_window<float>(v.frames, v.trans_masks, 0, {0, 20}).indices == std::vector<int>{0});
  CHECK_THROWS_AS(sample_training_window<float>(v.frames, {}, 0, {}), DimensionError);
}

TEST_CASE("same seed gives the same batches") {
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1), tiny_video("b", 9, 2)};
  for (Preset p : {Preset::S_C, Preset::S_R}) {
    Trainer<double> t(testing_support::tiny_model(), tiny_train(p));
    std::mt19937_64 r1(3), r2(3);
    for (int i = 0; i < 5; ++i) {
      const auto a = t.sample(videos, r1), b = t.sample(videos, r2);
      CHECK(a.indices == b.indices);
      CHECK(vals(a.frames) == vals(b.frames));
      CHECK(vals(a.masks) == vals(b.masks));
    }
  }
}

TEST_CASE("random-mask preset replaces the stored masks") {
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1)};
  Trainer<float> t(testing_support::tiny_model(), tiny_train(Preset::S_R));
  std::mt19937_64 rng(5);
  const auto w = t.sample(videos, rng);
  bool differs = false;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    const auto& stored = videos[0].trans_masks[static_cast<std::size_t>(w.indices[k])];
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 16; ++x)
        differs |= static_cast<bool>(w.masks.at({Index(k), 0, y, x}) != stored(y, x));
  }
  CHECK(differs);
}

TEST_CASE("loss log is bit-identical across runs in double precision") {
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1), tiny_video("b", 5, 2)};
  auto run = [&] {
    Trainer<double> t(testing_support::tiny_model(), tiny_train());
    std::mt19937_64 rng(11);
    std::vector<LossRow> rows;
    for (int i = 0; i < 50; ++i) rows.push_back(t.step({t.sample(videos, rng)}));
    return loss_report(rows).to_csv();
  };
  const std::string a = run(), b = run();
  CHECK(a == b);
  CHECK(a.rfind("iteration,L_hole,L_valid,L_adv,L_D_real,L_D_fake\n", 0) == 0);
}

TEST_CASE("iteration counter and updates") {
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1)};
  Trainer<float> t(testing_support::tiny_model(), tiny_train());
  std::mt19937_64 rng(1);
  const auto w = t.sample(videos, rng);
  const auto before = vals(t.generator().parameters().tensors()[0]);
  const LossRow r = t.step({w, w});
  CHECK(r.iteration == 1);
  CHECK(t.iteration() == 1);
  CHECK(vals(t.generator().parameters().tensors()[0]) != before);
  CHECK(std::isfinite(r.hole));
  CHECK(r.d_real >= 0);
  CHECK(r.d_fake >= 0);
  CHECK_THROWS_AS(t.step({}), ParameterError);
}

TEST_CASE("resume reproduces the validation loss") {
  TempDir dir("resume");
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1)};
  const VideoSample val = tiny_video("val", 5, 99);
  const auto window = sample_training_window<float>(val.frames, val.trans_masks, 2, {2, 4});
  Trainer<float> t(testing_support::tiny_model(), tiny_train());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) t.step({t.sample(videos, rng)});
  const LossRow before = t.evaluate(window);
  write_checkpoint(dir / "c.bin", t.checkpoint());

  Trainer<float> u(testing_support::tiny_model(), tiny_train());
  u.resume(read_checkpoint(dir / "c.bin"));
  CHECK(u.iteration() == 5);
  const LossRow after = u.evaluate(window);
  CHECK(std::abs(after.hole - before.hole) <= 1e-6);
  CHECK(std::abs(after.valid - before.valid) <= 1e-6);
  CHECK(std::abs(after.adv - before.adv) <= 1e-6);

  // Optimizer state comes back too: the next update matches.
  std::mt19937_64 r1(8), r2(8);
  const LossRow a = t.step({t.sample(videos, r1)});
  const LossRow b = u.step({u.sample(videos, r2)});
  CHECK(a.hole == b.hole);
  CHECK(a.d_fake == b.d_fake);
  CHECK(vals(t.generator().parameters().tensors()[3]) == vals(u.generator().parameters().tensors()[3]));
}

TEST_CASE("train writes checkpoints and the loss log") {
  TempDir dir("train");
  std::vector<VideoSample> videos{tiny_video("a", 6, 1), tiny_video("t", 4, 3, Split::test)};
  TrainConfig c = tiny_train(Preset::S_R);
  c.max_iterations = 5;
  c.eval_every = 2;
  const TrainResult r = train(testing_support::tiny_model(), c, videos, dir.path());
  CHECK(r.iterations == 5);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.losses.size() == 5);
  CHECK(checkpoint_name(42) == "iter_00000042.bin");
  for (int it : {0, 2, 4, 5}) CHECK(fs::exists(dir / "ckpt" / checkpoint_name(it)));
  CHECK_FALSE(fs::exists(dir / "ckpt" / checkpoint_name(3)));
  CHECK(r.last_checkpoint == dir / "ckpt" / checkpoint_name(5));
  const std::string csv = read_text(dir / "losses.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  const Checkpoint ck = read_checkpoint(r.last_checkpoint);
  CHECK(ck.step == 5);
  const ModelConfig back = model_config_from_checkpoint(ck);
  CHECK(back.heads == testing_support::tiny_model().heads);
  CHECK(back.channels == 8);
  CHECK(nlohmann::json::parse(ck.config).at("train").at("preset") == "S_R");

  videos.pop_back();
  videos[0].split = Split::test;
  CHECK_THROWS_AS(train(testing_support::tiny_model(), c, videos, dir / "none"), ParameterError);
}

TEST_CASE("transfer initialisation reproduces the source generator") {
  TempDir dir("transfer");
  const std::vector<VideoSample> videos{tiny_video("a", 6, 1)};
  TrainConfig src = tiny_train(Preset::S_R);
  src.max_iterations = 3;
  src.double_precision = true;
  const TrainResult r = train(testing_support::tiny_model(), src, videos, dir / "s_r");

  TrainConfig dst = tiny_train(Preset::T_C);
  dst.seed = 1234;
  dst.init_checkpoint = r.last_checkpoint;
  const Checkpoint ck = read_checkpoint(r.last_checkpoint);
  Trainer<double> t(testing_support::tiny_model(), dst);
  const auto w = sample_training_window<double>(videos[0].frames, videos[0].trans_masks, 3, {2, 4});
  const auto fresh = vals(t.generator().forward(w.frames, w.masks));
  t.initialize_from(ck);
  CHECK(t.iteration() == 0);
  const auto out = vals(t.generator().forward(w.frames, w.masks));
  const auto ref = vals(load_generator<double>(ck).forward(w.frames, w.masks));
  CHECK(out == ref);
  CHECK(out != fresh);
}

TEST_CASE("divergence stops training at the last good checkpoint") {
  TempDir dir("nan");
  std::vector<VideoSample> videos{tiny_video("a", 4, 1)};
  for (auto& f : videos[0].frames) f[0](8, 8) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig c = tiny_train();
  c.max_iterations = 4;
  const TrainResult r = train(testing_support::tiny_model(), c, videos, dir.path());
  CHECK(r.diverged);
  CHECK(r.iterations == 0);
  CHECK(r.last_checkpoint == dir / "ckpt" / checkpoint_name(0));
  CHECK(fs::exists(r.last_checkpoint));
  CHECK_FALSE(fs::exists(dir / "ckpt" / checkpoint_name(4)));

  // The failing step leaves the weights untouched.
  Trainer<float> t(testing_support::tiny_model(), c);
  std::mt19937_64 rng(1);
  const auto before = vals(t.generator().parameters().tensors()[0]);
  CHECK_THROWS_AS(t.step({t.sample(videos, rng)}), TrainingDiverged);
  CHECK(vals(t.generator().parameters().tensors()[0]) == before);
  CHECK(t.iteration() == 0);
}

TEST_CASE("smoothed hole loss decreases on the toy clip") {
  const VideoSample clip = testing_support::overfit_clip();
  TrainConfig c;
  c.seed = 1;
  Trainer<float> t(testing_support::toy_model(), c);
  std::vector<double> hole;
  for (int i = 0; i < 200; ++i) {
    const auto w = sample_training_window<float>(clip.frames, clip.trans_masks, i % 8, c.sampling);
    hole.push_back(t.step({w}).hole);
  }
  const auto blocks = testing_support::block_means(hole, 50);
  REQUIRE(blocks.size() == 4);
  for (std::size_t k = 1; k < blocks.size(); ++k) CHECK(blocks[k] < blocks[k - 1]);
}

TEST_CASE("video-level averaging") {
  Frame y(4, 4, 0.5);
  Mask m = Mask::Zero(4, 4);
  m.block(1, 1, 2, 2).setOnes();
  // Per-pixel error 0.1 is MSE 650.25, 20 dB; 0.1/sqrt(10) is 30 dB.
  const Frame a = offset_frame(y, 0.1), b = offset_frame(y, 0.1 / std::sqrt(10.0));
  const VideoScore s20 = score_video("v20", {y}, {a}, {m});
  const VideoScore s30 = score_video("v30", {y, y, y}, {b, b, b}, {m, m, m});
  CHECK(s20.psnr == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(s30.psnr == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(s30.frames_scored == 3);
  const EvaluationResult r = aggregate_scores({s20, s30});
  CHECK(r.psnr_mean == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(r.mse_mean == doctest::Approx((650.25 + 65.025) / 2).epsilon(1e-12));
  const auto rep = r.report();
  CHECK(rep.columns == std::vector<std::string>{"video", "frames", "psnr", "mse"});
  CHECK(rep.rows.back()[0] == "mean");
  CHECK_THROWS_AS(aggregate_scores({}), UndefinedMetricError);

  // Frames without masked pixels do not count.
  const VideoScore skip = score_video("s", {y, y}, {a, y}, {m, Mask::Zero(4, 4)});
  CHECK(skip.frames_scored == 1);
  CHECK(skip.psnr == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("perfect inpainting hits the PSNR cap") {
  const VideoSample v = tiny_video("p", 3, 4);
  const VideoScore s = score_video("p", v.frames, v.frames, v.trans_masks);
  const EvaluationResult r = aggregate_scores({s});
  CHECK(r.mse_mean == 0.0);
  CHECK(r.psnr_mean == psnr_from_mse(0.0));
}

TEST_CASE("evaluate_checkpoint skips videos without masks") {
  TempDir dir("eval");
  Trainer<float> t(testing_support::tiny_model(), tiny_train());
  write_checkpoint(dir / "c.bin", t.checkpoint());
  VideoSample empty = tiny_video("empty", 3, 5, Split::test);
  for (auto& m : empty.trans_masks) m.setZero();
  const VideoSample full = tiny_video("full", 3, 6, Split::test);
  const EvaluationResult r = evaluate_checkpoint(dir / "c.bin", {empty, full}, {2, 4});
  REQUIRE(r.videos.size() == 1);
  CHECK(r.videos[0].id == "full");
  CHECK(r.psnr_mean == r.videos[0].psnr);
  CHECK(std::isfinite(r.psnr_mean));
  CHECK_THROWS_AS(evaluate_checkpoint(dir / "c.bin", {empty}, {2, 4}), UndefinedMetricError);
  CHECK_THROWS_AS(evaluate_checkpoint(dir / "missing.bin", {full}, {2, 4}), IoError);

  // Only masked pixels change.
  const auto out = inpaint_video(load_generator<float>(read_checkpoint(dir / "c.bin")), full.frames,
                                 full.trans_masks, {2, 4});
  REQUIRE(out.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(out[1][c](0, 0) == full.frames[1][c](0, 0));
}

}  // TEST_SUITE
