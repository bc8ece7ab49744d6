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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "speculens/sttn.hpp"

namespace speculens {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

/// One named tensor with its raw little-endian payload.
struct TensorRecord {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<std::uint8_t> payload;

  template <typename Scalar>
  static TensorRecord from_values(std::string name, Shape shape, const std::vector<Scalar>& values);
  /// Values converted to Scalar.
  template <typename Scalar>
  std::vector<Scalar> values() const;
};

/// File layout: "SPECULNS", u32 format version, u64 step, u32 length + config
/// text, u32 tensor count, then per tensor u32 length + name, u8 dtype, u32
/// rank, i64 dims, payload. All integers little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t step = 0;
  /// Effective configuration, JSON.
  std::string config;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
};

/// Writes to a temporary file next to `path` and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Adds every parameter as "<prefix>.<name>".
template <typename Scalar>
void store_parameters(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params);
/// Overwrites parameter values in place; missing names or shape mismatches
/// throw IoError. Stored f32/f64 values are converted to Scalar.
template <typename Scalar>
void load_parameters(const Checkpoint& ckpt, const std::string& prefix, ParameterSet<Scalar>& params);

template <typename Scalar>
void store_adam(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params,
                const AdamState<Scalar>& state);
/// False when the checkpoint holds no optimizer state under `prefix`.
template <typename Scalar>
bool load_adam(const Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params,
               AdamState<Scalar>& state);

}  // namespace speculens
