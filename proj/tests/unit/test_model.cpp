#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <doctest.h>

#include "speculens/checkpoint.hpp"
#include "speculens/sttn.hpp"
#include "support/attention_cases.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace speculens;
using testing_support::TempDir;
using T = Tensor<double>;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

ModelConfig tiny_model() {
  ModelConfig m;
  m.image_size = 16;
  m.channels = 8;
  m.layers = 2;
  m.heads = {{4, 4}, {2, 2}, {1, 1}, {1, 2}};
  m.encoder_width1 = 4;
  m.encoder_width2 = 6;
  m.decoder_width = 4;
  m.disc_width1 = 4;
  m.disc_width2 = 4;
  return m;
}

T random_frames(Index t, Index s, std::mt19937_64& rng) {
  return T({t, 3, s, s}, oracle::random_values(static_cast<std::size_t>(t * 3 * s * s), rng, 0.0, 1.0));
}

T random_masks(Index t, Index s, std::mt19937_64& rng, double p = 0.3) {
  std::bernoulli_distribution hole(p);
  std::vector<double> m(static_cast<std::size_t>(t * s * s));
  for (auto& v : m) v = hole(rng) ? 1.0 : 0.0;
  return T({t, 1, s, s}, m);
}

double lrelu(double x) { return x > 0 ? x : 0.2 * x; }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("window indices") {
  SamplingConfig s{2, 4};
  CHECK(window_indices(10, 5, s) == std::vector<int>{0, 3, 4, 5, 6, 7, 8});
  CHECK(window_indices(10, 0, s) == std::vector<int>{0, 1, 2, 4, 8});
  CHECK(window_indices(10, 9, s) == std::vector<int>{0, 4, 7, 8, 9});
  CHECK(window_indices(10, 5, {0, 100}) == std::vector<int>{0, 5});
  CHECK(window_indices(10, 0, {0, 100}) == std::vector<int>{0});
  CHECK(window_indices(10, 5, s, true) == std::vector<int>{5});
  CHECK_THROWS_AS(window_indices(10, 10, s), ParameterError);
  CHECK_THROWS_AS(window_indices(10, 1, {-1, 4}), ConfigError);
  CHECK_THROWS_AS(window_indices(10, 1, {1, 0}), ConfigError);
}

TEST_CASE("model config validation") {
  ModelConfig m = tiny_model();
  CHECK_NOTHROW(m.validate());
  m.channels = 10;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = tiny_model();
  m.heads.push_back({3, 3});
  m.channels = 10;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = tiny_model();
  m.layers = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  ModelConfig def;
  CHECK_NOTHROW(def.validate());
  CHECK(def.feature_size() == 72);
  CHECK(def.layers == 8);
}

TEST_CASE("attention matches direct formula") {
  std::mt19937_64 rng(7);
  for (int it = 0; it < 100; ++it) {
    const auto k = attention_cases::random_case(rng);
    const auto out = head_attention(k.feature_tensor(), k.valid, k.head, k.weights());
    const auto ref = k.reference();
    CHECK(max_abs_diff(out.output.values(), ref.output) < 1e-10);
    CHECK(max_abs_diff(out.weights.values(), ref.alpha) < 1e-10);
    const Index n = static_cast<Index>(k.valid.size());
    const bool any = std::find(k.valid.begin(), k.valid.end(), true) != k.valid.end();
    const auto a = out.weights.values();
    for (Index i = 0; i < n; ++i) {
      double row = 0;
      for (Index j = 0; j < n; ++j) {
        row += a[i * n + j];
        if (!k.valid[j]) CHECK(a[i * n + j] == 0.0);
      }
      CHECK(row == doctest::Approx(any ? 1.0 : 0.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("attention closed forms") {
  std::mt19937_64 rng(3);
  attention_cases::Case k;
  k.t = 2;
  k.c = 2;
  k.d = 2;
  k.h = 2;
  k.w = 2;
  k.head = {2, 2};
  k.features = oracle::random_values(16, rng);
  k.wq = oracle::random_values(4, rng);
  k.bq = oracle::random_values(2, rng);
  k.wk = oracle::random_values(4, rng);
  k.bk = oracle::random_values(2, rng);
  k.wv = oracle::random_values(4, rng);
  k.bv = oracle::random_values(2, rng);

  SUBCASE("single valid key") {
    k.valid = {false, true};
    const auto out = head_attention(k.feature_tensor(), k.valid, k.head, k.weights());
    CHECK(out.weights.at({0, 1}) == doctest::Approx(1.0));
    CHECK(out.weights.at({1, 1}) == doctest::Approx(1.0));
    CHECK(out.weights.at({0, 0}) == 0.0);
    // Both frames receive frame 1's value projection.
    const T v = conv2d(k.feature_tensor(), k.weights().value_weight, k.weights().value_bias, 1, 0);
    for (Index t = 0; t < 2; ++t)
      for (Index i = 0; i < 8; ++i) CHECK(out.output.values()[t * 8 + i] == doctest::Approx(v.values()[8 + i]));
  }
  SUBCASE("identical keys split evenly") {
    std::copy(k.features.begin(), k.features.begin() + 8, k.features.begin() + 8);
    k.valid = {true, true};
    const auto out = head_attention(k.feature_tensor(), k.valid, k.head, k.weights());
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 2; ++j) CHECK(out.weights.at({i, j}) == doctest::Approx(0.5));
  }
  SUBCASE("no valid keys gives zeros") {
    k.valid = {false, false};
    const auto out = head_attention(k.feature_tensor(), k.valid, k.head, k.weights());
    for (double x : out.output.values()) CHECK(x == 0.0);
  }
}

TEST_CASE("attention is invariant to key frame order") {
  std::mt19937_64 rng(11);
  auto k = attention_cases::random_case(rng);
  k.t = 3;
  k.h = k.head.patch_r1 * 2;
  k.w = k.head.patch_r2;
  k.features = oracle::random_values(static_cast<std::size_t>(k.t * k.c * k.h * k.w), rng);
  k.valid.assign(6, true);
  k.valid[3] = false;
  const auto base = head_attention(k.feature_tensor(), k.valid, k.head, k.weights());
  // Swap frames 1 and 2.
  const std::vector<Index> perm = {0, 2, 1};
  const T swapped = index_select(k.feature_tensor(), 0, perm);
  std::vector<bool> valid2 = {k.valid[0], k.valid[1], k.valid[4], k.valid[5], k.valid[2], k.valid[3]};
  const auto out = head_attention(swapped, valid2, k.head, k.weights());
  const T back = index_select(out.output, 0, perm);
  CHECK(max_abs_diff(back.values(), base.output.values()) < 1e-10);
}

TEST_CASE("patch validity uses any unmasked pixel") {
  // 1 frame, 8x8 image, 2x2 features, 1x1 patches: each patch covers 4x4 pixels.
  std::vector<double> m(64, 1.0);
  m[0] = 0.0;           // patch (0,0) has one valid pixel
  m[4 * 8 + 4] = 0.0;   // patch (1,1)
  const auto v = patch_validity(T({1, 1, 8, 8}, m), 2, 2, {1, 1});
  CHECK(v == std::vector<bool>{true, false, false, true});
  const auto coarse = patch_validity(T({1, 1, 8, 8}, m), 2, 2, {2, 2});
  CHECK(coarse == std::vector<bool>{true});
  CHECK(patch_validity(T({1, 1, 8, 8}, 1.0), 2, 2, {2, 2}) == std::vector<bool>{false});
}

TEST_CASE("encoder contract") {
  ModelConfig m = tiny_model();
  m.image_size = 288;
  m.heads = {{36, 36}, {18, 18}, {9, 9}, {6, 6}};
  const Generator<float> g(m, 1);
  const Tensor<float> zero({1, 3, 288, 288}), no_mask({1, 1, 288, 288});
  const auto f = g.encode(zero, no_mask);
  CHECK(f.shape() == Shape{1, 8, 72, 72});
  for (float x : f.values()) CHECK(std::isfinite(x));
  CHECK_THROWS_AS(g.encode(Tensor<float>({1, 3, 64, 64}), Tensor<float>({1, 1, 64, 64})), DimensionError);

  std::mt19937_64 rng(5);
  const Generator<double> gd(tiny_model(), 2);
  const T one = random_frames(1, 16, rng), mask = random_masks(1, 16, rng);
  const auto twice = gd.encode(concat<double>({one, one}, 0), concat<double>({mask, mask}, 0));
  CHECK(max_abs_diff(slice(twice, 0, 0, 1).values(), slice(twice, 0, 1, 1).values()) == 0.0);
}

TEST_CASE("transformer layer matches per-slice oracle") {
  std::mt19937_64 rng(17);
  const ModelConfig cfg = tiny_model();
  const Generator<double> g(cfg, 9);
  const Index t = 2, c = cfg.channels, s = cfg.image_size, f = cfg.feature_size(), d = c / 4;
  const T feat({t, c, f, f}, oracle::random_values(static_cast<std::size_t>(t * c * f * f), rng));
  const T masks = random_masks(t, s, rng, 0.6);
  const T out = g.transformer_layer(1, feat, masks);

  const auto& P = g.parameters();
  const auto fv = vec(feat.values());
  std::vector<double> heads(static_cast<std::size_t>(t * c * f * f));
  for (Index h = 0; h < 4; ++h) {
    const auto hw = g.head_weights(1, h);
    const auto valid = patch_validity(masks, f, f, cfg.heads[h]);
    const auto ref = oracle::naive_attention(fv, t, c, f, f, vec(hw.query_weight.values()), vec(hw.query_bias.values()),
                                             vec(hw.key_weight.values()), vec(hw.key_bias.values()),
                                             vec(hw.value_weight.values()), vec(hw.value_bias.values()), d,
                                             cfg.heads[h].patch_r1, cfg.heads[h].patch_r2, valid);
    for (Index ti = 0; ti < t; ++ti)
      for (Index ch = 0; ch < d; ++ch)
        for (Index p = 0; p < f * f; ++p)
          heads[static_cast<std::size_t>((ti * c + h * d + ch) * f * f + p)] = ref.output[(ti * d + ch) * f * f + p];
  }
  auto cv = [&](const std::string& name, const std::vector<double>& in, Index k) {
    return oracle::naive_conv2d(in, t, c, f, f, vec(P.get(name + ".weight").values()), c, k, k,
                                vec(P.get(name + ".bias").values()), 1, k / 2);
  };
  const auto mixed = cv("layer1.out", heads, 1);
  std::vector<double> x(fv.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = fv[i] + mixed[i];
  auto hidden = cv("layer1.ffn.0", x, 3);
  for (auto& v : hidden) v = lrelu(v);
  const auto r = cv("layer1.ffn.1", hidden, 3);
  std::vector<double> expect(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) expect[i] = x[i] + r[i];
  CHECK(max_abs_diff(out.values(), expect) < 1e-10);
}

TEST_CASE("generator forward contract") {
  std::mt19937_64 rng(21);
  const Generator<double> g(tiny_model(), 4);
  const T x = random_frames(5, 16, rng);
  const T none({5, 1, 16, 16});
  const T y = g.forward(x, none);
  CHECK(y.shape() == x.shape());
  for (double v : y.values()) CHECK((std::isfinite(v) && v >= 0.0 && v <= 1.0));

  const auto [w, idx] = generator_forward(g, x, none, {1, 2}, 3);
  CHECK(idx == std::vector<int>{0, 2, 3, 4});
  CHECK(w.dim(0) == 4);

  const T one = slice(x, 0, 2, 1), m1 = random_masks(1, 16, rng);
  const auto single = generator_forward(g, one, m1, {2, 4}, 0, true).first;
  const auto multi = generator_forward(g, one, m1, {2, 4}, 0, false).first;
  CHECK(max_abs_diff(single.values(), multi.values()) == 0.0);
}

TEST_CASE("attention concentrates on the only valid patch") {
  const Generator<double> g(tiny_model(), 8);
  const Index f = 4;
  std::mt19937_64 rng(2);
  const T feat({2, 8, f, f}, oracle::random_values(2 * 8 * f * f, rng));
  std::vector<double> m(2 * 16 * 16, 1.0);
  m[16 * 16 + 5 * 16 + 9] = 0.0;  // one valid pixel in frame 1
  const T masks({2, 1, 16, 16}, m);
  const HeadConfig head{1, 1};
  const auto valid = patch_validity(masks, f, f, head);
  REQUIRE(std::count(valid.begin(), valid.end(), true) == 1);
  const auto j = static_cast<Index>(std::find(valid.begin(), valid.end(), true) - valid.begin());
  CHECK(j == 16 + 1 * 4 + 2);
  const auto out = head_attention(feat, valid, head, g.head_weights(0, 3));
  for (Index i = 0; i < 32; ++i) CHECK(out.weights.at({i, j}) == doctest::Approx(1.0));
}

TEST_CASE("composite") {
  std::mt19937_64 rng(4);
  const T x = random_frames(2, 4, rng), y = random_frames(2, 4, rng);
  CHECK(max_abs_diff(composite(x, T({2, 1, 4, 4}, 0.0), y).values(), x.values()) == 0.0);
  CHECK(max_abs_diff(composite(x, T({2, 1, 4, 4}, 1.0), y).values(), y.values()) == 0.0);
  const T m = random_masks(2, 4, rng, 0.5);
  const T c = composite(x, m, y);
  for (Index t = 0; t < 2; ++t)
    for (Index ch = 0; ch < 3; ++ch)
      for (Index p = 0; p < 16; ++p) {
        const auto k = static_cast<std::size_t>((t * 3 + ch) * 16 + p);
        CHECK(c.values()[k] == (m.values()[t * 16 + p] != 0.0 ? y.values()[k] : x.values()[k]));
      }

  Frame fx(3, 3, 0.2), fy(3, 3, 0.9);
  Mask fm = Mask::Zero(3, 3);
  fm(1, 1) = 1;
  const Frame fc = composite(fx, fm, fy);
  CHECK(fc[0](1, 1) == 0.9);
  CHECK(fc[2](0, 0) == 0.2);
}

TEST_CASE("reconstruction losses") {
  std::mt19937_64 rng(6);
  const T y = random_frames(2, 6, rng);
  const T m = random_masks(2, 6, rng, 0.4);
  CHECK(loss_hole(y, y, m).item() == 0.0);
  CHECK(loss_valid(y, y, m).item() == 0.0);

  const T shifted = add_scalar(y, -0.2);
  CHECK(loss_hole(y, shifted, m).item() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(loss_valid(y, shifted, m).item() == doctest::Approx(0.2).epsilon(1e-12));

  CHECK(loss_hole(y, shifted, T({2, 1, 6, 6}, 0.0)).item() == 0.0);
  CHECK(loss_valid(y, shifted, T({2, 1, 6, 6}, 1.0)).item() == 0.0);

  const T yh = random_frames(2, 6, rng);
  double hole = 0, valid = 0, nh = 0, nv = 0;
  for (Index t = 0; t < 2; ++t)
    for (Index ch = 0; ch < 3; ++ch)
      for (Index p = 0; p < 36; ++p) {
        const double mv = m.values()[t * 36 + p];
        const double e = std::abs(y.values()[(t * 3 + ch) * 36 + p] - yh.values()[(t * 3 + ch) * 36 + p]);
        hole += mv * e;
        valid += (1 - mv) * e;
        nh += mv;
        nv += 1 - mv;
      }
  CHECK(loss_hole(y, yh, m).item() == doctest::Approx(hole / nh).epsilon(1e-12));
  CHECK(loss_valid(y, yh, m).item() == doctest::Approx(valid / nv).epsilon(1e-12));
  CHECK_THROWS_AS(loss_hole(y, random_frames(1, 6, rng), m), DimensionError);
}

TEST_CASE("adversarial losses") {
  const T zero({2, 1, 3, 3});
  CHECK(loss_adv_generator(zero).item() == 0.0);
  CHECK(loss_discriminator(zero, zero).item() == 2.0);
  CHECK(loss_discriminator(T({2, 1, 3, 3}, 2.0), T({2, 1, 3, 3}, -2.0)).item() == 0.0);

  std::mt19937_64 rng(8);
  const T r({3, 1, 4, 4}, oracle::random_values(48, rng, -3, 3)), f({3, 1, 4, 4}, oracle::random_values(48, rng, -3, 3));
  double real = 0, fake = 0, mf = 0;
  for (int i = 0; i < 48; ++i) {
    real += std::max(0.0, 1 - r.values()[i]);
    fake += std::max(0.0, 1 + f.values()[i]);
    mf += f.values()[i];
  }
  CHECK(hinge_real(r).item() == doctest::Approx(real / 48).epsilon(1e-12));
  CHECK(hinge_fake(f).item() == doctest::Approx(fake / 48).epsilon(1e-12));
  CHECK(loss_discriminator(r, f).item() == doctest::Approx((real + fake) / 48).epsilon(1e-12));
  CHECK(loss_adv_generator(f).item() == doctest::Approx(-mf / 48).epsilon(1e-12));
}

TEST_CASE("total loss") {
  const LossWeights w;
  CHECK(w.hole == 1.0);
  CHECK(w.valid == 1.0);
  CHECK(w.adv == 0.01);
  CHECK(std::abs(total_loss(0.5, 0.2, 1.0, w) - 0.71) < 1e-12);
  CHECK(total_loss(0.0, 0.0, 0.0, w) == 0.0);
  CHECK(std::abs(total_loss(T::scalar(0.5), T::scalar(0.2), T::scalar(1.0), w).item() - 0.71) < 1e-12);
  CHECK_THROWS_AS((LossWeights{1, -1, 0}.validate()), ConfigError);
}

TEST_CASE("discriminator score map") {
  std::mt19937_64 rng(10);
  const Discriminator<double> d(tiny_model(), 3);
  const T x = random_frames(3, 16, rng);
  const T s = d.score(x);
  CHECK(s.shape() == Shape{3, 1, 4, 4});
  // Changing frame 0 moves frame 1's scores through the temporal mix but
  // leaves frame 2 untouched.
  T x2 = random_frames(3, 16, rng);
  std::copy(x.values().begin() + 3 * 256, x.values().end(), x2.mutable_values().begin() + 3 * 256);
  const T s2 = d.score(x2);
  CHECK(max_abs_diff(slice(s, 0, 1, 1).values(), slice(s2, 0, 1, 1).values()) > 0.0);
  CHECK(max_abs_diff(slice(s, 0, 2, 1).values(), slice(s2, 0, 2, 1).values()) == 0.0);
}

TEST_CASE("generator gradient matches finite differences") {
  GradcheckConfig cfg = GradcheckConfig::micro();
  cfg.per_tensor = 6;
  const auto r = gradcheck_generator(cfg);
  INFO("worst " << r.worst_parameter);
  CHECK(r.checked > 60);
  CHECK(r.skipped * 100 <= r.checked);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  Generator<double> g(tiny_model(), 12);
  AdamState<double> st;
  st.step = 3;
  for (const auto& t : g.parameters().tensors()) {
    st.first_moment.emplace_back(static_cast<std::size_t>(t.numel()), 0.25);
    st.second_moment.emplace_back(static_cast<std::size_t>(t.numel()), 1.0 / 3.0);
  }
  Checkpoint ck;
  ck.step = 42;
  ck.config = R"({"seed": 1})";
  store_parameters(ck, "gen", g.parameters());
  store_adam(ck, "gen", g.parameters(), st);
  write_checkpoint(dir / "ckpt/iter_00000042.bin", ck);
  const Checkpoint back = read_checkpoint(dir / "ckpt/iter_00000042.bin");
  CHECK(back.step == 42);
  CHECK(back.config == ck.config);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ck.tensors[i].name);
    CHECK(back.tensors[i].shape == ck.tensors[i].shape);
    CHECK(back.tensors[i].payload == ck.tensors[i].payload);
  }

  Generator<double> other(tiny_model(), 99);
  load_parameters(back, "gen", other.parameters());
  for (std::size_t i = 0; i < g.parameters().size(); ++i)
    CHECK(max_abs_diff(g.parameters().tensors()[i].values(), other.parameters().tensors()[i].values()) == 0.0);
  AdamState<double> st2;
  REQUIRE(load_adam(back, "gen", other.parameters(), st2));
  CHECK(st2.step == 3);
  CHECK(st2.second_moment == st.second_moment);
  CHECK_FALSE(load_adam(back, "disc", other.parameters(), st2));

  Generator<float> gf(tiny_model(), 1);
  load_parameters(back, "gen", gf.parameters());
  CHECK(gf.parameters().tensors()[0].values()[0] == static_cast<float>(g.parameters().tensors()[0].values()[0]));

  ModelConfig wider = tiny_model();
  wider.channels = 12;
  Generator<double> mismatch(wider, 1);
  CHECK_THROWS_AS(load_parameters(back, "gen", mismatch.parameters()), IoError);

  {
    std::ofstream f(dir / "bad.bin", std::ios::binary);
    f << "NOTACKPT";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.bin"), IoError);
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.bin"), IoError);
  const auto full = std::filesystem::file_size(dir / "ckpt/iter_00000042.bin");
  std::filesystem::resize_file(dir / "ckpt/iter_00000042.bin", full - 3);
  CHECK_THROWS_AS(read_checkpoint(dir / "ckpt/iter_00000042.bin"), IoError);
}

}  // TEST_SUITE
