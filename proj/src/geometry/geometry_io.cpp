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

#include <spdlog/fmt/fmt.h>

#include "speculens/geometry.hpp"

namespace fs = std::filesystem;

namespace speculens {

namespace {

std::vector<double> parse_numbers(std::string line) {
  for (auto& c : line)
    if (c == ',' || c == ';' || c == '\t') c = ' ';
  std::istringstream ss(line);
  std::vector<double> v;
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument(tok);
    }
    if (used != tok.size()) throw std::invalid_argument(tok);
    v.push_back(d);
  }
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

std::uint32_t to_little(std::uint32_t v) {
  return std::endian::native == std::endian::little ? v : __builtin_bswap32(v);
}

float read_f32(std::istream& in) {
  std::uint32_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), 4);
  bits = to_little(bits);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  bits = to_little(bits);
  out.write(reinterpret_cast<const char*>(&bits), 4);
}

}  // namespace

std::vector<Mat4> load_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Mat4> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line) || line[line.find_first_not_of(" \t")] == '#') continue;
    std::vector<double> v;
    try {
      v = parse_numbers(line);
    } catch (const std::invalid_argument& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number: " + e.what());
    }
    if (v.size() != 16) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 16 values");
    Mat4 m;
    for (int k = 0; k < 16; ++k) m(k / 4, k % 4) = v[static_cast<std::size_t>(k)];
    poses.push_back(m);
  }
  return poses;
}

CameraIntrinsics load_intrinsics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<double> v;
  try {
    std::string all = buf.str();
    for (auto& c : all)
      if (c == '\n' || c == '\r') c = ' ';
    v = parse_numbers(all);
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": not a number: " + e.what());
  }
  if (v.size() != 4 && v.size() != 5) throw IoError(path.string() + ": expected fx fy cx cy [skew]");
  CameraIntrinsics k{v[0], v[1], v[2], v[3], v.size() == 5 ? v[4] : 0.0};
  k.validate();
  return k;
}

std::vector<Correspondence> load_correspondences(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Correspondence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::vector<double> v;
    try {
      v = parse_numbers(line);
    } catch (const std::invalid_argument& e) {
      if (lineno == 1) continue;  // header
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number: " + e.what());
    }
    if (v.size() != 4) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected x1,y1,x2,y2");
    out.push_back({Vec2(v[0], v[1]), Vec2(v[2], v[3])});
  }
  return out;
}

void write_correspondences(const fs::path& path, const std::vector<Correspondence>& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x1,y1,x2,y2\n";
  for (const auto& p : c) out << fmt::format("{},{},{},{}\n", p.p1.x(), p.p1.y(), p.p2.x(), p.p2.y());
}

FlowField load_flow(const fs::path& path, Eigen::Index height, Eigen::Index width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  FlowField f;
  if (path.extension() == ".flo") {
    const float magic = read_f32(in);
    std::int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || magic != 202021.25f || w < 1 || h < 1) throw IoError("not a .flo file: " + path.string());
    f.u.resize(h, w);
    f.v.resize(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.u(y, x) = read_f32(in);
        f.v(y, x) = read_f32(in);
      }
  } else {
    if (height < 1 || width < 1) throw IoError("raw flow file " + path.string() + " needs its height and width");
    f.u.resize(height, width);
    f.v.resize(height, width);
    for (Plane* p : {&f.u, &f.v})
      for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = read_f32(in);
  }
  if (!in) throw IoError("truncated flow file " + path.string());
  return f;
}

void write_flow_raw(const fs::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Plane* p : {&flow.u, &flow.v})
    for (Eigen::Index i = 0; i < p->size(); ++i) write_f32(out, static_cast<float>(p->data()[i]));
}

std::vector<Correspondence> flow_correspondences(const FlowField& flow, int stride) {
  if (stride < 1) throw ParameterError("flow_correspondences: stride must be >= 1");
  std::vector<Correspondence> out;
  for (Eigen::Index y = 0; y < flow.u.rows(); y += stride)
    for (Eigen::Index x = 0; x < flow.u.cols(); x += stride) {
      const double u = flow.u(y, x), v = flow.v(y, x);
      if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) > 1e9 || std::abs(v) > 1e9) continue;
      out.push_back({Vec2(double(x), double(y)), Vec2(x + u, y + v)});
    }
  return out;
}

}  // namespace speculens
