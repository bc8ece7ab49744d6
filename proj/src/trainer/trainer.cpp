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

#include <json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "speculens/trainer.hpp"

namespace speculens {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool finite(double v) { return std::isfinite(v); }

template <typename Scalar>
AdamConfig<Scalar> adam_config(const TrainConfig& cfg) {
  AdamConfig<Scalar> a;
  a.lr = static_cast<Scalar>(cfg.lr);
  a.beta1 = static_cast<Scalar>(cfg.beta1);
  a.beta2 = static_cast<Scalar>(cfg.beta2);
  return a;
}

}  // namespace

const char* preset_name(Preset p) {
  switch (p) {
    case Preset::S_R: return "S_R";
    case Preset::S_C: return "S_C";
    case Preset::T_C: return "T_C";
    case Preset::T_C_NT: return "T_C_NT";
  }
  return "?";
}

Preset parse_preset(const std::string& name) {
  for (Preset p : {Preset::S_R, Preset::S_C, Preset::T_C, Preset::T_C_NT})
    if (name == preset_name(p)) return p;
  throw ConfigError("train.preset must be one of S_R, S_C, T_C, T_C_NT (got \"" + name + "\")");
}

PresetTraits preset_traits(Preset p) {
  switch (p) {
    case Preset::S_R: return {true, false, false};
    case Preset::S_C: return {false, false, false};
    case Preset::T_C: return {false, true, false};
    case Preset::T_C_NT: return {false, true, true};
  }
  return {};
}

void TrainConfig::validate() const {
  if (max_iterations < 0) throw ConfigError("train.max_iterations must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (clip_length < 1) throw ConfigError("train.clip_length must be >= 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  sampling.validate();
  loss_weights.validate();
  random_masks.validate();
  if (preset_traits(preset).transfer && !init_checkpoint)
    throw ConfigError(std::string("train.init_checkpoint is required for preset ") + preset_name(preset));
}

SamplingConfig TrainConfig::effective_sampling() const {
  SamplingConfig s = sampling;
  if (single_frame()) s.neighbor_radius = 0;
  return s;
}

template <typename Scalar>
TrainingWindow<Scalar> sample_training_window(const std::vector<Frame>& frames, const std::vector<Mask>& masks,
                                              int t_center, const SamplingConfig& sampling, bool single_frame) {
  if (frames.size() != masks.size())
    throw DimensionError("sample_training_window: " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(masks.size()) + " masks");
  TrainingWindow<Scalar> w;
  w.indices = window_indices(static_cast<int>(frames.size()), t_center, sampling, single_frame);
  w.frames = frames_to_tensor<Scalar>(frames, w.indices);
  w.masks = masks_to_tensor<Scalar>(masks, w.indices);
  w.center = t_center;
  return w;
}

template <typename Scalar>
Trainer<Scalar>::Trainer(ModelConfig model, TrainConfig cfg)
    : model_(std::move(model)),
      cfg_(std::move(cfg)),
      gen_(model_, splitmix(cfg_.seed ^ 0x67656eULL)),
      disc_(model_, splitmix(cfg_.seed ^ 0x646973ULL)) {
  cfg_.validate();
}

template <typename Scalar>
TrainingWindow<Scalar> Trainer<Scalar>::sample(const std::vector<VideoSample>& videos, std::mt19937_64& rng) const {
  if (videos.empty()) throw ParameterError("Trainer::sample: no videos");
  const VideoSample& v = videos[static_cast<std::size_t>(rng() % videos.size())];
  const int length = static_cast<int>(v.frames.size());
  if (length == 0) throw ParameterError("Trainer::sample: video " + v.id + " has no frames");
  const int clip = std::min(length, cfg_.clip_length);
  const int start = static_cast<int>(rng() % static_cast<std::uint64_t>(length - clip + 1));
  const int center = static_cast<int>(rng() % static_cast<std::uint64_t>(clip));
  const std::vector<Frame> frames(v.frames.begin() + start, v.frames.begin() + start + clip);
  std::vector<Mask> masks;
  if (preset_traits(cfg_.preset).random_masks) {
    RandomMaskConfig rm = cfg_.random_masks;
    rm.seed = rng();
    masks = random_continuous_masks(clip, frames.front().height(), frames.front().width(), rm);
  } else {
    if (v.trans_masks.size() != v.frames.size())
      throw DimensionError("Trainer::sample: video " + v.id + " has " + std::to_string(v.trans_masks.size()) +
                           " translated masks for " + std::to_string(length) + " frames");
    masks.assign(v.trans_masks.begin() + start, v.trans_masks.begin() + start + clip);
  }
  return sample_training_window<Scalar>(frames, masks, center, cfg_.effective_sampling(), cfg_.single_frame());
}

template <typename Scalar>
LossRow Trainer<Scalar>::step(const std::vector<TrainingWindow<Scalar>>& batch) {
  if (batch.empty()) throw ParameterError("Trainer::step: empty batch");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(batch.size());
  LossRow row;
  row.iteration = iteration_ + 1;

  std::vector<Tensor<Scalar>> outputs;
  for (const auto& w : batch) outputs.push_back(gen_.forward(w.frames, w.masks));

  disc_.parameters().zero_grad();
  Tensor<Scalar> d_loss = Tensor<Scalar>::scalar(Scalar(0));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor<Scalar> real = hinge_real(disc_.score(batch[b].frames));
    const Tensor<Scalar> fake = hinge_fake(disc_.score(outputs[b].detach()));
    row.d_real += static_cast<double>(real.item()) / static_cast<double>(batch.size());
    row.d_fake += static_cast<double>(fake.item()) / static_cast<double>(batch.size());
    d_loss = add(d_loss, scale(add(real, fake), inv));
  }
  if (!finite(row.d_real) || !finite(row.d_fake))
    throw TrainingDiverged("discriminator loss is not finite at iteration " + std::to_string(row.iteration));
  backward(d_loss);
  if (!adam_step<Scalar>(disc_.parameters().tensors(), disc_opt_, adam_config<Scalar>(cfg_)))
    throw TrainingDiverged("discriminator gradient is not finite at iteration " + std::to_string(row.iteration));

  gen_.parameters().zero_grad();
  Tensor<Scalar> g_loss = Tensor<Scalar>::scalar(Scalar(0));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor<Scalar> hole = loss_hole(batch[b].frames, outputs[b], batch[b].masks);
    const Tensor<Scalar> valid = loss_valid(batch[b].frames, outputs[b], batch[b].masks);
    const Tensor<Scalar> adv = loss_adv_generator(disc_.score(outputs[b]));
    row.hole += static_cast<double>(hole.item()) / static_cast<double>(batch.size());
    row.valid += static_cast<double>(valid.item()) / static_cast<double>(batch.size());
    row.adv += static_cast<double>(adv.item()) / static_cast<double>(batch.size());
    g_loss = add(g_loss, scale(total_loss(hole, valid, adv, cfg_.loss_weights), inv));
  }
  if (!finite(row.hole) || !finite(row.valid) || !finite(row.adv))
    throw TrainingDiverged("generator loss is not finite at iteration " + std::to_string(row.iteration));
  backward(g_loss);
  if (!adam_step<Scalar>(gen_.parameters().tensors(), gen_opt_, adam_config<Scalar>(cfg_)))
    throw TrainingDiverged("generator gradient is not finite at iteration " + std::to_string(row.iteration));
  ++iteration_;
  return row;
}

template <typename Scalar>
LossRow Trainer<Scalar>::evaluate(const TrainingWindow<Scalar>& w) const {
  LossRow row;
  row.iteration = iteration_;
  const Tensor<Scalar> out = gen_.forward(w.frames, w.masks).detach();
  const Tensor<Scalar> fake = disc_.score(out).detach();
  row.hole = static_cast<double>(loss_hole(w.frames, out, w.masks).item());
  row.valid = static_cast<double>(loss_valid(w.frames, out, w.masks).item());
  row.adv = static_cast<double>(loss_adv_generator(fake).item());
  row.d_real = static_cast<double>(hinge_real(disc_.score(w.frames)).item());
  row.d_fake = static_cast<double>(hinge_fake(fake).item());
  return row;
}

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint() const {
  Checkpoint ck;
  ck.step = static_cast<std::uint64_t>(iteration_);
  ck.config = config_echo(model_, cfg_);
  store_parameters(ck, "gen", gen_.parameters());
  store_parameters(ck, "disc", disc_.parameters());
  store_adam(ck, "gen", gen_.parameters(), gen_opt_);
  store_adam(ck, "disc", disc_.parameters(), disc_opt_);
  return ck;
}

template <typename Scalar>
void Trainer<Scalar>::resume(const Checkpoint& ckpt) {
  initialize_from(ckpt);
  load_adam(ckpt, "gen", gen_.parameters(), gen_opt_);
  load_adam(ckpt, "disc", disc_.parameters(), disc_opt_);
  iteration_ = static_cast<long long>(ckpt.step);
}

template <typename Scalar>
void Trainer<Scalar>::initialize_from(const Checkpoint& ckpt) {
  load_parameters(ckpt, "gen", gen_.parameters());
  load_parameters(ckpt, "disc", disc_.parameters());
  gen_opt_ = {};
  disc_opt_ = {};
  iteration_ = 0;
}

std::string checkpoint_name(long long iteration) { return fmt::format("iter_{:08d}.bin", iteration); }

MetricReport loss_report(const std::vector<LossRow>& rows) {
  MetricReport r;
  r.columns = {"iteration", "L_hole", "L_valid", "L_adv", "L_D_real", "L_D_fake"};
  for (const auto& l : rows)
    r.add_row({std::to_string(l.iteration), format_number(l.hole), format_number(l.valid), format_number(l.adv),
               format_number(l.d_real), format_number(l.d_fake)});
  return r;
}

std::string config_echo(const ModelConfig& m, const TrainConfig& t) {
  nlohmann::ordered_json heads = nlohmann::ordered_json::array();
  for (const auto& h : m.heads) heads.push_back({h.patch_r1, h.patch_r2});
  nlohmann::ordered_json j;
  j["version"] = SPECULENS_VERSION;
  j["model"] = {{"channels", m.channels},         {"layers", m.layers},
                {"heads", heads},                 {"encoder_width1", m.encoder_width1},
                {"encoder_width2", m.encoder_width2}, {"decoder_width", m.decoder_width},
                {"disc_width1", m.disc_width1},   {"disc_width2", m.disc_width2},
                {"image_size", m.image_size}};
  j["train"] = {{"preset", preset_name(t.preset)},
                {"init_checkpoint", t.init_checkpoint ? t.init_checkpoint->string() : std::string()},
                {"max_iterations", t.max_iterations},
                {"batch", t.batch},
                {"clip_length", t.clip_length},
                {"neighbor_radius", t.sampling.neighbor_radius},
                {"distant_stride", t.sampling.distant_stride},
                {"lambda_hole", t.loss_weights.hole},
                {"lambda_valid", t.loss_weights.valid},
                {"lambda_adv", t.loss_weights.adv},
                {"seed", t.seed},
                {"eval_every", t.eval_every},
                {"lr", t.lr},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"strokes_per_frame", t.random_masks.strokes_per_frame},
                {"brush_width", t.random_masks.brush_width},
                {"max_step", t.random_masks.max_step},
                {"double_precision", t.double_precision}};
  return j.dump(2);
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt) {
  try {
    const auto j = nlohmann::json::parse(ckpt.config).at("model");
    ModelConfig m;
    m.channels = j.at("channels").get<Index>();
    m.layers = j.at("layers").get<Index>();
    m.heads.clear();
    for (const auto& h : j.at("heads")) m.heads.push_back({h.at(0).get<Index>(), h.at(1).get<Index>()});
    m.encoder_width1 = j.at("encoder_width1").get<Index>();
    m.encoder_width2 = j.at("encoder_width2").get<Index>();
    m.decoder_width = j.at("decoder_width").get<Index>();
    m.disc_width1 = j.at("disc_width1").get<Index>();
    m.disc_width2 = j.at("disc_width2").get<Index>();
    m.image_size = j.at("image_size").get<Index>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint config is not readable: ") + e.what());
  }
}

template <typename Scalar>
Generator<Scalar> load_generator(const Checkpoint& ckpt) {
  Generator<Scalar> g(model_config_from_checkpoint(ckpt), 0);
  load_parameters(ckpt, "gen", g.parameters());
  return g;
}

namespace {

template <typename Scalar>
TrainResult train_impl(const ModelConfig& model, const TrainConfig& cfg, const std::vector<VideoSample>& train_videos,
                       const std::filesystem::path& out_dir) {
  Trainer<Scalar> trainer(model, cfg);
  if (preset_traits(cfg.preset).transfer) {
    const Checkpoint init = read_checkpoint(*cfg.init_checkpoint);
    trainer.initialize_from(init);
    spdlog::info("initialised from {} (iteration {})", cfg.init_checkpoint->string(), init.step);
  }
  const auto ckpt_dir = out_dir / "ckpt";
  TrainResult result;
  auto save = [&] {
    result.last_checkpoint = ckpt_dir / checkpoint_name(trainer.iteration());
    write_checkpoint(result.last_checkpoint, trainer.checkpoint());
  };
  save();
  std::mt19937_64 rng(cfg.seed);
  for (long long it = 0; it < cfg.max_iterations; ++it) {
    std::vector<TrainingWindow<Scalar>> batch;
    for (int b = 0; b < cfg.batch; ++b) batch.push_back(trainer.sample(train_videos, rng));
    try {
      result.losses.push_back(trainer.step(batch));
    } catch (const TrainingDiverged& e) {
      spdlog::error("{}; stopping, last good checkpoint {}", e.what(), result.last_checkpoint.string());
      result.diverged = true;
      break;
    }
    const auto& l = result.losses.back();
    if (l.iteration % cfg.eval_every == 0) {
      spdlog::info("iter {} hole {:.5f} valid {:.5f} adv {:.4f} d_real {:.4f} d_fake {:.4f}", l.iteration, l.hole,
                   l.valid, l.adv, l.d_real, l.d_fake);
      save();
    }
  }
  if (!result.diverged && trainer.iteration() % cfg.eval_every != 0) save();
  result.iterations = trainer.iteration();
  loss_report(result.losses).write_csv(out_dir / "losses.csv");
  return result;
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const std::vector<VideoSample>& videos,
                  const std::filesystem::path& out_dir) {
  model.validate();
  cfg.validate();
  std::vector<VideoSample> train_videos;
  for (const auto& v : videos)
    if (v.split == Split::train) train_videos.push_back(v);
  if (train_videos.empty()) throw ParameterError("train: the dataset has no training videos");
  std::filesystem::create_directories(out_dir);
  return cfg.double_precision ? train_impl<double>(model, cfg, train_videos, out_dir)
                              : train_impl<float>(model, cfg, train_videos, out_dir);
}

template <typename Scalar>
std::vector<Frame> inpaint_video(const Generator<Scalar>& gen, const std::vector<Frame>& frames,
                                 const std::vector<Mask>& masks, const SamplingConfig& sampling, bool single_frame) {
  if (frames.size() != masks.size())
    throw DimensionError("inpaint_video: " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(masks.size()) + " masks");
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
    const auto w = sample_training_window<Scalar>(frames, masks, t, sampling, single_frame);
    const Tensor<Scalar> y = gen.forward(w.frames, w.masks).detach();
    const auto pos = std::find(w.indices.begin(), w.indices.end(), t) - w.indices.begin();
    const auto ut = static_cast<std::size_t>(t);
    out.push_back(composite(frames[ut], masks[ut], tensor_to_frame(y, pos)));
  }
  return out;
}

VideoScore score_video(const std::string& id, const std::vector<Frame>& targets, const std::vector<Frame>& inpainted,
                       const std::vector<Mask>& masks) {
  if (targets.size() != inpainted.size() || targets.size() != masks.size())
    throw DimensionError("score_video: frame, output and mask counts differ for " + id);
  VideoScore s;
  s.id = id;
  double psnr = 0, mse = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (mask_area(masks[t]) == 0) continue;
    const double m = masked_mse(targets[t], inpainted[t], masks[t]);
    mse += m;
    psnr += psnr_from_mse(m);
    ++s.frames_scored;
  }
  if (s.frames_scored > 0) {
    s.psnr = psnr / static_cast<double>(s.frames_scored);
    s.mse = mse / static_cast<double>(s.frames_scored);
  }
  return s;
}

MetricReport EvaluationResult::report() const {
  MetricReport r;
  r.columns = {"video", "frames", "psnr", "mse"};
  for (const auto& v : videos)
    r.add_row({v.id, std::to_string(v.frames_scored), format_number(v.psnr), format_number(v.mse)});
  r.add_row({"mean", "", format_number(psnr_mean), format_number(mse_mean)});
  return r;
}

EvaluationResult aggregate_scores(std::vector<VideoScore> videos) {
  if (videos.empty()) throw UndefinedMetricError("evaluate: no test video has masked pixels");
  EvaluationResult res;
  res.videos = std::move(videos);
  for (const auto& s : res.videos) {
    res.psnr_mean += s.psnr;
    res.mse_mean += s.mse;
  }
  res.psnr_mean /= static_cast<double>(res.videos.size());
  res.mse_mean /= static_cast<double>(res.videos.size());
  return res;
}

template <typename Scalar>
EvaluationResult evaluate_generator(const Generator<Scalar>& gen, const std::vector<VideoSample>& test_videos,
                                    const SamplingConfig& sampling, bool single_frame) {
  if (test_videos.empty()) throw ParameterError("evaluate: no test videos");
  std::vector<VideoScore> scores;
  for (const auto& v : test_videos) {
    const auto out = inpaint_video(gen, v.frames, v.trans_masks, sampling, single_frame);
    VideoScore s = score_video(v.id, v.frames, out, v.trans_masks);
    if (s.frames_scored == 0) {
      spdlog::warn("video {} has no masked pixels in any frame; skipped", v.id);
      continue;
    }
    scores.push_back(std::move(s));
  }
  return aggregate_scores(std::move(scores));
}

EvaluationResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                     const std::vector<VideoSample>& test_videos, const SamplingConfig& sampling,
                                     bool single_frame) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  return evaluate_generator(load_generator<double>(ck), test_videos, sampling, single_frame);
}

#define SPECULENS_INSTANTIATE_TRAINER(S)                                                                           \
  template class Trainer<S>;                                                                                       \
  template TrainingWindow<S> sample_training_window<S>(const std::vector<Frame>&, const std::vector<Mask>&, int,  \
                                                       const SamplingConfig&, bool);                               \
  template Generator<S> load_generator<S>(const Checkpoint&);                                                      \
  template std::vector<Frame> inpaint_video<S>(const Generator<S>&, const std::vector<Frame>&,                     \
                                               const std::vector<Mask>&, const SamplingConfig&, bool);             \
  template EvaluationResult evaluate_generator<S>(const Generator<S>&, const std::vector<VideoSample>&,            \
                                                  const SamplingConfig&, bool);

SPECULENS_INSTANTIATE_TRAINER(float)
SPECULENS_INSTANTIATE_TRAINER(double)

}  // namespace speculens
