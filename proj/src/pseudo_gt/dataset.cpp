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

#include <cstdio>
#include <fstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "speculens/pseudo_gt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace speculens {

namespace {

std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu.png", i);
  return buf;
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

fs::path frames_dir_of(const fs::path& video) {
  return fs::is_directory(video / "frames") ? video / "frames" : video;
}

}  // namespace

void write_video_sample(const fs::path& root, const VideoSample& sample) {
  const fs::path dir = root / sample.id;
  for (const char* sub : {"frames", "masks_orig", "masks_trans"}) make_dir(dir / sub);
  for (std::size_t t = 0; t < sample.frames.size(); ++t) {
    write_frame_png(dir / "frames" / frame_name(t), sample.frames[t]);
    write_mask_png(dir / "masks_orig" / frame_name(t), sample.orig_masks[t]);
    write_mask_png(dir / "masks_trans" / frame_name(t), sample.trans_masks[t]);
  }
}

VideoSample load_video_sample(const fs::path& root, const std::string& id) {
  const fs::path dir = root / id;
  VideoSample s;
  s.id = id;
  s.frames = load_frames(dir / "frames");
  s.orig_masks = load_masks(dir / "masks_orig");
  s.trans_masks = load_masks(dir / "masks_trans");
  if (s.frames.empty()) throw IoError("video " + dir.string() + " has no frames");
  if (s.orig_masks.size() != s.frames.size() || s.trans_masks.size() != s.frames.size()) {
    throw DimensionError("video " + id + ": frame and mask counts differ");
  }
  return s;
}

void write_manifest(const fs::path& root, const DatasetConfig& cfg, const std::vector<DatasetEntry>& entries) {
  json videos = json::array();
  std::size_t n_train = 0, n_test = 0;
  for (const auto& e : entries) {
    videos.push_back({{"id", e.id}, {"split", split_name(e.split)}, {"frames", e.frames}});
    (e.split == Split::train ? n_train : n_test)++;
  }
  const json doc = {
      {"version", SPECULENS_VERSION},
      {"seed", cfg.seed},
      {"offset", {cfg.offset.dx, cfg.offset.dy}},
      {"test_fraction", cfg.test_fraction},
      {"image_size", cfg.image_size},
      {"detector",
       {{"saturation_threshold", cfg.detector.saturation_threshold},
        {"chroma_ratio_threshold", cfg.detector.chroma_ratio_threshold},
        {"local_window", cfg.detector.local_window},
        {"min_component_area", cfg.detector.min_component_area},
        {"achromatic_tolerance", cfg.detector.achromatic_tolerance}}},
      {"dilation",
       {{"shape", cfg.dilation.shape},
        {"kernel", cfg.dilation.kernel},
        {"iterations", cfg.dilation.iterations},
        {"before_translate", cfg.dilation.before_translate}}},
      {"counts", {{"train", n_train}, {"test", n_test}}},
      {"videos", videos},
  };
  make_dir(root);
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << doc.dump(2) << '\n';
}

std::vector<DatasetEntry> read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
  std::vector<DatasetEntry> entries;
  try {
    for (const auto& v : doc.at("videos")) {
      const std::string split = v.at("split").get<std::string>();
      if (split != "train" && split != "test") throw IoError("unknown split '" + split + "' in " + path.string());
      entries.push_back({v.at("id").get<std::string>(), split == "train" ? Split::train : Split::test,
                         v.value("frames", std::size_t{0})});
    }
  } catch (const json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
  return entries;
}

std::vector<DatasetEntry> build_dataset(const fs::path& src, const fs::path& out, const DatasetConfig& cfg) {
  cfg.detector.validate();
  cfg.dilation.validate();
  if (!fs::is_directory(src)) throw IoError("not a directory: " + src.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(src))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  const std::vector<Split> splits = split_dataset(ids, cfg.test_fraction, cfg.seed);

  std::vector<DatasetEntry> entries;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<Frame> frames = load_frames(frames_dir_of(src / ids[i]));
    if (frames.empty()) throw IoError("video " + ids[i] + " has no frames");
    if (cfg.image_size > 0)
      for (auto& f : frames) f = square_crop_resize(f, cfg.image_size);
    std::vector<Mask> masks = detect_sequence(frames, cfg.detector);
    VideoSample s = build_pseudo_gt(std::move(frames), std::move(masks), cfg.offset, cfg.dilation);
    s.id = ids[i];
    s.split = splits[i];
    write_video_sample(out, s);
    entries.push_back({s.id, s.split, s.frames.size()});
    spdlog::info("{}: {} frames, split {}", s.id, s.frames.size(), split_name(s.split));
  }
  write_manifest(out, cfg, entries);
  const SplitCounts counts = split_counts(ids.size(), cfg.test_fraction);
  spdlog::info("dataset: {} train / {} test videos", counts.train, counts.test);
  return entries;
}

}  // namespace speculens
