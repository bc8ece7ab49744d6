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

#include "speculens/commands.hpp"

#include <charconv>
#include <cstdlib>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "speculens/geometry.hpp"
#include "speculens/metrics.hpp"

namespace speculens {

namespace fs = std::filesystem;

namespace {

std::string frame_name(std::size_t t) { return fmt::format("{:06d}.png", t); }

std::vector<VideoSample> load_dataset(const fs::path& root, const std::string& split) {
  if (split != "train" && split != "test" && split != "all")
    throw ConfigError("split must be train, test or all (got \"" + split + "\")");
  std::vector<VideoSample> out;
  for (const auto& e : read_manifest(root)) {
    if (split != "all" && split != split_name(e.split)) continue;
    VideoSample s = load_video_sample(root, e.id);
    s.split = e.split;
    out.push_back(std::move(s));
  }
  return out;
}

void check_frame_size(const std::vector<VideoSample>& videos, const ModelConfig& model) {
  for (const auto& v : videos)
    if (v.frames.front().height() != model.image_size || v.frames.front().width() != model.image_size)
      throw ConfigError(fmt::format("model.image_size is {} but video {} has {}x{} frames", model.image_size, v.id,
                                    v.frames.front().height(), v.frames.front().width()));
}

MetricReport pair_report(const std::vector<PairResult>& results) {
  MetricReport r;
  r.columns = {"pair", "i", "j", "rte", "rre", "inliers", "status"};
  for (std::size_t p = 0; p < results.size(); ++p) {
    const auto& x = results[p];
    const bool scored = x.ok && x.rte;
    r.add_row({std::to_string(p), std::to_string(x.i), std::to_string(x.j), scored ? format_number(*x.rte) : "",
               x.ok ? format_number(x.rre) : "", std::to_string(x.inliers), x.ok ? "ok" : x.error});
  }
  return r;
}

std::size_t failures(const std::vector<PairResult>& results) {
  std::size_t n = 0;
  for (const auto& r : results) n += (r.ok && r.rte) ? 0 : 1;
  return n;
}

CorrespondenceSource csv_source(const fs::path& dir) {
  return [dir](int i, int j) { return load_correspondences(dir / fmt::format("{:06d}_{:06d}.csv", i, j)); };
}

}  // namespace

PipelineConfig resolve_config(const fs::path& path) {
  PipelineConfig cfg = load_pipeline_config(path);
  if (const char* env = std::getenv("SPECULENS_SEED"); env && *env) {
    const std::string s(env);
    std::uint64_t seed = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw ConfigError("SPECULENS_SEED must be a non-negative integer (got \"" + s + "\")");
    cfg.seed = seed;
    cfg.pseudo_gt.seed = seed;
    cfg.train.seed = seed;
    cfg.geometry.pose.ransac.seed = seed;
  }
  return cfg;
}

fs::path resolve_out(const fs::path& out) {
  const char* root = std::getenv("SPECULENS_OUT_ROOT");
  if (root && *root && out.is_relative()) return fs::path(root) / out;
  return out;
}

void cmd_detect(const DetectArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const auto files = list_images(args.input);
  if (files.empty()) throw IoError("no frames in " + args.input.string());
  write_run_metadata(out, cfg);
  fs::create_directories(out / "masks");
  for (const auto& f : files) {
    const Mask m = detect_specular(load_frame(f), cfg.detector);
    write_mask_png(out / "masks" / (f.stem().string() + ".png"), m);
  }
  spdlog::info("detect: {} masks written to {}", files.size(), (out / "masks").string());
}

void cmd_pseudo_gt(const PseudoGtArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  write_run_metadata(out, cfg);
  const auto entries = build_dataset(args.input, out, cfg.pseudo_gt);
  spdlog::info("pseudo-gt: {} videos written to {}", entries.size(), out.string());
}

TrainResult cmd_train(const TrainArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const auto videos = load_dataset(args.data, "all");
  check_frame_size(videos, cfg.model);
  write_run_metadata(out, cfg);
  const TrainResult r = train(cfg.model, cfg.train, videos, out);
  spdlog::info("train: {} iterations, last checkpoint {}", r.iterations, r.last_checkpoint.string());
  return r;
}

void cmd_inpaint(const InpaintArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const Checkpoint ck = read_checkpoint(args.checkpoint);
  const auto videos = load_dataset(args.data, args.split);
  const ModelConfig model = model_config_from_checkpoint(ck);
  check_frame_size(videos, model);
  write_run_metadata(out, cfg);
  auto run = [&](const auto& gen) {
    for (const auto& v : videos) {
      const auto& masks = args.mask_source == MaskSource::orig ? v.orig_masks : v.trans_masks;
      const auto frames = inpaint_video(gen, v.frames, masks, cfg.eval.sampling, cfg.eval.single_frame);
      fs::create_directories(out / v.id);
      for (std::size_t t = 0; t < frames.size(); ++t) write_frame_png(out / v.id / frame_name(t), frames[t]);
    }
  };
  if (cfg.eval.double_precision)
    run(load_generator<double>(ck));
  else
    run(load_generator<float>(ck));
  spdlog::info("inpaint: {} videos ({} masks) written to {}", videos.size(), mask_source_name(args.mask_source),
               out.string());
}

EvaluationResult cmd_eval_psnr(const EvalPsnrArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const Checkpoint ck = read_checkpoint(args.checkpoint);
  const auto videos = load_dataset(args.data, "test");
  if (videos.empty()) throw ParameterError("eval-psnr: the dataset has no test videos");
  check_frame_size(videos, model_config_from_checkpoint(ck));
  write_run_metadata(out, cfg);
  const EvaluationResult r =
      cfg.eval.double_precision
          ? evaluate_generator(load_generator<double>(ck), videos, cfg.eval.sampling, cfg.eval.single_frame)
          : evaluate_generator(load_generator<float>(ck), videos, cfg.eval.sampling, cfg.eval.single_frame);
  r.report().write_csv(out / "psnr.csv");
  spdlog::info("eval-psnr: PSNR_mean {:.4f} dB, MSE_mean {:.4f} over {} videos", r.psnr_mean, r.mse_mean,
               r.videos.size());
  return r;
}

PoseSummary cmd_eval_pose(const EvalPoseArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const auto poses = load_poses(args.poses);
  const CameraIntrinsics k = load_intrinsics(args.intrinsics);

  auto evaluate = [&](const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    if (args.csv_correspondences)
      return evaluate_pairs(static_cast<int>(poses.size()), csv_source(dir), poses, k, cfg.geometry.pose);
    const auto frames = load_frames(dir);
    if (frames.empty()) throw IoError("no frames in " + dir.string());
    return evaluate_pairs(static_cast<int>(frames.size()),
                          feature_source(frames, cfg.geometry.pose.features, cfg.geometry.pose.ratio), poses, k,
                          cfg.geometry.pose);
  };

  write_run_metadata(out, cfg);
  PoseSummary summary;
  const auto orig = evaluate(args.orig);
  summary.pairs = orig.size();
  summary.failed_orig = failures(orig);
  pair_report(orig).write_csv(out / "pose_orig.csv");

  if (args.inpainted) {
    const auto inp = evaluate(*args.inpainted);
    if (inp.size() != orig.size())
      throw DimensionError(fmt::format("eval-pose: {} pairs in the original but {} in the inpainted sequence",
                                       orig.size(), inp.size()));
    summary.failed_inp = failures(inp);
    pair_report(inp).write_csv(out / "pose_inp.csv");
    std::vector<double> rte_o, rte_i, rre_o, rre_i;
    for (std::size_t p = 0; p < orig.size(); ++p) {
      if (!(orig[p].ok && orig[p].rte && inp[p].ok && inp[p].rte)) continue;
      rte_o.push_back(*orig[p].rte);
      rte_i.push_back(*inp[p].rte);
      rre_o.push_back(orig[p].rre);
      rre_i.push_back(inp[p].rre);
    }
    if (rte_o.empty()) throw UndefinedMetricError("eval-pose: no pair succeeded in both sequences");
    MetricReport delta = delta_report("rte", delta_summary(rte_o, rte_i));
    append_delta_rows(delta, "rre", delta_summary(rre_o, rre_i));
    delta.write_csv(out / "pose_delta.csv");
  }

  MetricReport s;
  s.columns = {"sequence", "pairs", "evaluated", "failed"};
  s.add_row({"orig", std::to_string(summary.pairs), std::to_string(summary.pairs - summary.failed_orig),
             std::to_string(summary.failed_orig)});
  if (args.inpainted)
    s.add_row({"inp", std::to_string(summary.pairs), std::to_string(summary.pairs - summary.failed_inp),
               std::to_string(summary.failed_inp)});
  s.write_csv(out / "pose_summary.csv");
  if (summary.failed_orig + summary.failed_inp > 0)
    spdlog::warn("eval-pose: {} original and {} inpainted pairs failed and were skipped", summary.failed_orig,
                 summary.failed_inp);
  return summary;
}

void cmd_eval_disparity(const EvalDisparityArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  const MetricReport r = evaluate_disparity_manifest(args.manifest);
  write_run_metadata(out, cfg);
  r.write_csv(out / "disparity.csv");
}

bool cmd_gradcheck(const GradcheckArgs& args) {
  const PipelineConfig cfg = resolve_config(args.config);
  const fs::path out = resolve_out(args.out);
  if (!(args.tolerance > 0.0)) throw ConfigError("gradcheck tolerance must be > 0");
  if (args.per_tensor < 0) throw ConfigError("gradcheck per-tensor count must be >= 0");
  GradcheckConfig g = GradcheckConfig::micro();
  g.per_tensor = args.per_tensor;
  write_run_metadata(out, cfg);
  const GradcheckResult r = gradcheck_generator(g);
  const bool pass = r.max_relative_error < args.tolerance && r.skipped * 100 <= r.checked;
  MetricReport rep;
  rep.columns = {"checked", "skipped", "max_relative_error", "max_absolute_error", "worst_parameter", "status"};
  rep.add_row({std::to_string(r.checked), std::to_string(r.skipped), format_number(r.max_relative_error),
               format_number(r.max_absolute_error), r.worst_parameter, pass ? "pass" : "fail"});
  rep.write_csv(out / "gradcheck.csv");
  spdlog::info("gradcheck: {} coordinates, {} skipped, max relative error {:.3g} ({})", r.checked, r.skipped,
               r.max_relative_error, pass ? "pass" : "fail");
  return pass;
}

int exit_code_for(const std::function<void()>& command) {
  try {
    command();
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const IoError& e) {
    spdlog::error("I/O error: {}", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("I/O error: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace speculens
