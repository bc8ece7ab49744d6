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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "speculens/metrics.hpp"

namespace fs = std::filesystem;

namespace speculens {

namespace {

DisparityMap load_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (!in || magic != "Pf" || w < 1 || h < 1) throw IoError("not a single-channel PFM: " + path.string());
  const bool little = scale < 0;
  DisparityMap d(h, w);
  std::vector<char> row(static_cast<std::size_t>(w) * 4);
  // Rows are stored bottom to top.
  for (int r = h - 1; r >= 0; --r) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (!in) throw IoError("truncated PFM " + path.string());
    for (int c = 0; c < w; ++c) {
      std::uint32_t bits;
      std::memcpy(&bits, row.data() + 4 * c, 4);
      if (little != (std::endian::native == std::endian::little)) bits = __builtin_bswap32(bits);
      float f;
      std::memcpy(&f, &bits, 4);
      d(r, c) = f;
    }
  }
  return d;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

DisparityMap load_disparity(const fs::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".pfm") return load_pfm(path);
  if (ext == ".png") return load_png16(path).cast<double>() / 256.0;
  throw IoError("unsupported disparity format: " + path.string());
}

Mask disparity_validity(const DisparityMap& gt) {
  return (gt.isFinite() && gt > 0.0).cast<std::uint8_t>();
}

MetricReport evaluate_disparity_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest " + manifest.string());
  const std::vector<std::string> header = split_csv(line);
  const std::vector<std::string> want = {"experiment", "modality", "gt", "occlusion", "est_orig", "est_inp"};
  if (header != want) {
    throw IoError("manifest " + manifest.string() + " must have columns experiment,modality,gt,occlusion,est_orig,est_inp");
  }
  MetricReport report;
  report.columns = {"experiment", "modality", "occluded", "bad3_orig", "bad3_inp", "bad3_delta",
                    "rms_orig",   "rms_inp",  "rms_delta", "epe_orig", "epe_inp",  "epe_delta"};
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv(line);
    if (f.size() != want.size()) throw IoError(manifest.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    DisparityPair orig, inp;
    orig.ground_truth = load_disparity(resolve(f[2]));
    orig.valid = disparity_validity(orig.ground_truth);
    orig.occluded = f[3].empty() ? empty_mask(orig.ground_truth.rows(), orig.ground_truth.cols()) : load_mask(resolve(f[3]));
    orig.estimate = load_disparity(resolve(f[4]));
    inp = orig;
    inp.estimate = load_disparity(resolve(f[5]));
    for (bool occ : {false, true}) {
      const DisparityErrors a = disparity_errors(orig, occ), b = disparity_errors(inp, occ);
      report.add_row({f[0], f[1], occ ? "yes" : "no", format_number(a.bad3), format_number(b.bad3),
                      format_number(a.bad3 - b.bad3), format_number(a.rms), format_number(b.rms),
                      format_number(a.rms - b.rms), format_number(a.epe), format_number(b.epe),
                      format_number(a.epe - b.epe)});
    }
  }
  return report;
}

}  // namespace speculens
