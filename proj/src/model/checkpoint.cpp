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
#include <cstring>
#include <fstream>
#include <iterator>

#include "speculens/checkpoint.hpp"

namespace speculens {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'E', 'C', 'U', 'L', 'N', 'S'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename Scalar>
using Bits = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  std::string text(std::size_t n) {
    const auto b = bytes(n);
    return {b.begin(), b.end()};
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError("truncated checkpoint: " + path_.string());
  }

  const std::vector<std::uint8_t>& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

}  // namespace

template <typename Scalar>
TensorRecord TensorRecord::from_values(std::string name, Shape shape, const std::vector<Scalar>& values) {
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = sizeof(Scalar) == 4 ? DType::f32 : DType::f64;
  r.shape = std::move(shape);
  if (shape_numel(r.shape) != static_cast<Index>(values.size()))
    throw DimensionError("TensorRecord " + r.name + ": value count does not match shape");
  r.payload.reserve(values.size() * sizeof(Scalar));
  for (const Scalar v : values) put_le(r.payload, std::bit_cast<Bits<Scalar>>(v));
  return r;
}

template <typename Scalar>
std::vector<Scalar> TensorRecord::values() const {
  const std::size_t n = payload.size() / dtype_size(dtype);
  std::vector<Scalar> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::f32) {
      std::uint32_t b = 0;
      for (std::size_t k = 0; k < 4; ++k) b |= static_cast<std::uint32_t>(payload[4 * i + k]) << (8 * k);
      out[i] = static_cast<Scalar>(std::bit_cast<float>(b));
    } else {
      std::uint64_t b = 0;
      for (std::size_t k = 0; k < 8; ++k) b |= static_cast<std::uint64_t>(payload[8 * i + k]) << (8 * k);
      out[i] = static_cast<Scalar>(std::bit_cast<double>(b));
    }
  }
  return out;
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, Checkpoint::kVersion);
  put_le(out, ckpt.step);
  put_le(out, static_cast<std::uint32_t>(ckpt.config.size()));
  out.insert(out.end(), ckpt.config.begin(), ckpt.config.end());
  put_le(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_le(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    put_le(out, static_cast<std::uint32_t>(t.shape.size()));
    for (const Index d : t.shape) put_le(out, static_cast<std::uint64_t>(d));
    out.insert(out.end(), t.payload.begin(), t.payload.end());
  }

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint: " + tmp.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("cannot write checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(data, path);
  const auto magic = r.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  Checkpoint ckpt;
  ckpt.step = r.get<std::uint64_t>();
  ckpt.config = r.text(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.text(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw IoError("unknown dtype in checkpoint tensor " + t.name + ": " + path.string());
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
    t.payload = r.bytes(static_cast<std::size_t>(shape_numel(t.shape)) * dtype_size(t.dtype));
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IoError("trailing bytes in checkpoint: " + path.string());
  return ckpt;
}

template <typename Scalar>
void store_parameters(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensors()[i];
    ckpt.tensors.push_back(TensorRecord::from_values(prefix + "." + params.names()[i], t.shape(),
                                                     std::vector<Scalar>(t.values().begin(), t.values().end())));
  }
}

template <typename Scalar>
void load_parameters(const Checkpoint& ckpt, const std::string& prefix, ParameterSet<Scalar>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = prefix + "." + params.names()[i];
    const TensorRecord* rec = ckpt.find(name);
    if (!rec) throw IoError("checkpoint has no tensor " + name);
    auto& t = params.tensors()[i];
    if (rec->shape != t.shape())
      throw IoError("checkpoint tensor " + name + " has shape " + shape_string(rec->shape) + ", model expects " +
                    shape_string(t.shape()));
    const auto v = rec->values<Scalar>();
    std::copy(v.begin(), v.end(), t.mutable_values().begin());
  }
}

template <typename Scalar>
void store_adam(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params,
                const AdamState<Scalar>& state) {
  ckpt.tensors.push_back(
      TensorRecord::from_values(prefix + ".adam.step", {}, std::vector<double>{static_cast<double>(state.step)}));
  if (state.first_moment.size() != params.size()) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params.tensors()[i].shape();
    ckpt.tensors.push_back(TensorRecord::from_values(prefix + ".adam.m." + params.names()[i], s, state.first_moment[i]));
    ckpt.tensors.push_back(TensorRecord::from_values(prefix + ".adam.v." + params.names()[i], s, state.second_moment[i]));
  }
}

template <typename Scalar>
bool load_adam(const Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params,
               AdamState<Scalar>& state) {
  const TensorRecord* step = ckpt.find(prefix + ".adam.step");
  if (!step) return false;
  AdamState<Scalar> out;
  out.step = static_cast<long long>(step->values<double>().at(0));
  for (std::size_t i = 0; i < params.size() && out.step > 0; ++i) {
    const TensorRecord* m = ckpt.find(prefix + ".adam.m." + params.names()[i]);
    const TensorRecord* v = ckpt.find(prefix + ".adam.v." + params.names()[i]);
    if (!m || !v || m->shape != params.tensors()[i].shape() || v->shape != m->shape)
      throw IoError("checkpoint optimizer state for " + params.names()[i] + " is missing or malformed");
    out.first_moment.push_back(m->values<Scalar>());
    out.second_moment.push_back(v->values<Scalar>());
  }
  state = std::move(out);
  return true;
}

#define SPECULENS_INSTANTIATE_CKPT(S)                                                                         \
  template TensorRecord TensorRecord::from_values<S>(std::string, Shape, const std::vector<S>&);              \
  template std::vector<S> TensorRecord::values<S>() const;                                                    \
  template void store_parameters<S>(Checkpoint&, const std::string&, const ParameterSet<S>&);                 \
  template void load_parameters<S>(const Checkpoint&, const std::string&, ParameterSet<S>&);                  \
  template void store_adam<S>(Checkpoint&, const std::string&, const ParameterSet<S>&, const AdamState<S>&);  \
  template bool load_adam<S>(const Checkpoint&, const std::string&, const ParameterSet<S>&, AdamState<S>&);

SPECULENS_INSTANTIATE_CKPT(float)
SPECULENS_INSTANTIATE_CKPT(double)

}  // namespace speculens
