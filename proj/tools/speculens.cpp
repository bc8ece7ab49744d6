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

#include <functional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "speculens/commands.hpp"

namespace {

using namespace speculens;

void add_common(CLI::App* cmd, std::filesystem::path& config, std::filesystem::path& out) {
  cmd->add_option("-c,--config", config, "Pipeline config (TOML)")->required();
  cmd->add_option("-o,--out", out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("speculens"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Specular highlight inpainting and evaluation"};
  app.set_version_flag("--version", std::string("speculens ") + SPECULENS_VERSION);
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  int code = 0;
  auto run = [&](std::function<void()> fn) {
    return [&code, &verbose, fn] {
      if (verbose) spdlog::set_level(spdlog::level::debug);
      code = exit_code_for(fn);
    };
  };

  DetectArgs detect;
  auto* c_detect = app.add_subcommand("detect", "Detect specular highlights in a directory of frames");
  add_common(c_detect, detect.config, detect.out);
  c_detect->add_option("-i,--input", detect.input, "Frame directory")->required();
  c_detect->callback(run([&] { cmd_detect(detect); }));

  PseudoGtArgs pgt;
  auto* c_pgt = app.add_subcommand("pseudo-gt", "Build the pseudo ground-truth dataset");
  add_common(c_pgt, pgt.config, pgt.out);
  c_pgt->add_option("-i,--input", pgt.input, "Directory with one sub-directory per video")
      ->required();
  c_pgt->callback(run([&] { cmd_pseudo_gt(pgt); }));

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the inpainting model");
  add_common(c_train, tr.config, tr.out);
  c_train->add_option("-d,--data", tr.data, "Dataset directory")->required();
  c_train->callback(run([&] {
    if (cmd_train(tr).diverged) throw TrainingDiverged("training diverged");
  }));

  InpaintArgs inp;
  std::string mask_source;
  auto* c_inp = app.add_subcommand("inpaint", "Inpaint dataset videos with a checkpoint");
  add_common(c_inp, inp.config, inp.out);
  c_inp->add_option("-k,--checkpoint", inp.checkpoint, "Checkpoint file")->required();
  c_inp->add_option("-d,--data", inp.data, "Dataset directory")->required();
  c_inp->add_option("--mask-source", mask_source, "orig (default) or trans")->check(CLI::IsMember({"orig", "trans"}));
  c_inp->add_option("--split", inp.split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  c_inp->callback(run([&] {
    if (!mask_source.empty()) inp.mask_source = parse_mask_source(mask_source);
    cmd_inpaint(inp);
  }));

  EvalPsnrArgs ep;
  auto* c_ep = app.add_subcommand("eval-psnr", "Masked PSNR/MSE on the test split");
  add_common(c_ep, ep.config, ep.out);
  c_ep->add_option("-k,--checkpoint", ep.checkpoint, "Checkpoint file")->required();
  c_ep->add_option("-d,--data", ep.data, "Dataset directory")->required();
  c_ep->callback(run([&] { cmd_eval_psnr(ep); }));

  EvalPoseArgs pose;
  std::filesystem::path inpainted;
  auto* c_pose = app.add_subcommand("eval-pose", "Relative pose errors on original and inpainted sequences");
  add_common(c_pose, pose.config, pose.out);
  c_pose->add_option("--orig", pose.orig, "Original frames")->required();
  c_pose->add_option("--inpainted", inpainted, "Inpainted frames");
  c_pose->add_option("--poses", pose.poses, "Camera-to-world poses")->required();
  c_pose->add_option("--intrinsics", pose.intrinsics, "fx fy cx cy")->required();
  c_pose->add_flag("--csv-correspondences", pose.csv_correspondences,
                   "Read %06d_%06d.csv correspondences instead of matching features");
  c_pose->callback(run([&] {
    if (!inpainted.empty()) pose.inpainted = inpainted;
    cmd_eval_pose(pose);
  }));

  EvalDisparityArgs disp;
  auto* c_disp = app.add_subcommand("eval-disparity", "Disparity errors with and without inpainting");
  add_common(c_disp, disp.config, disp.out);
  c_disp->add_option("-m,--manifest", disp.manifest, "Disparity manifest CSV")->required();
  c_disp->callback(run([&] { cmd_eval_disparity(disp); }));

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the generator gradients");
  add_common(c_gc, gc.config, gc.out);
  c_gc->add_option("--per-tensor", gc.per_tensor, "Coordinates per tensor (0 = all)");
  c_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  c_gc->callback(run([&] {
    if (!cmd_gradcheck(gc)) throw std::runtime_error("gradient check failed");
  }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? 0 : 2;
  }
  return code;
}
