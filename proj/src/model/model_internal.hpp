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

#include <cmath>
#include <random>
#include <string>

#include "speculens/sttn.hpp"

namespace speculens::detail {

/// Adds "<name>.weight" [out,in,k,k] drawn from N(0, 2 / fan_in) and a zero
/// "<name>.bias".
template <typename Scalar>
void add_conv(ParameterSet<Scalar>& params, const std::string& name, Index out, Index in, Index k,
              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in * k * k)));
  std::vector<Scalar> w(static_cast<std::size_t>(out * in * k * k));
  for (auto& x : w) x = static_cast<Scalar>(normal(rng));
  params.add(name + ".weight", Tensor<Scalar>(Shape{out, in, k, k}, std::move(w)));
  params.add(name + ".bias", Tensor<Scalar>(Shape{out}));
}

template <typename Scalar>
Tensor<Scalar> conv(const ParameterSet<Scalar>& params, const std::string& name, const Tensor<Scalar>& x,
                    Index stride, Index padding) {
  return conv2d(x, params.get(name + ".weight"), params.get(name + ".bias"), stride, padding);
}

template <typename Scalar>
void check_frames(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks, Index size, const char* op) {
  if (frames.rank() != 4 || frames.dim(1) != 3) throw DimensionError(std::string(op) + ": frames must be [T,3,H,W]");
  if (frames.dim(2) != size || frames.dim(3) != size)
    throw DimensionError(std::string(op) + ": frames are " + std::to_string(frames.dim(2)) + "x" +
                         std::to_string(frames.dim(3)) + ", model expects " + std::to_string(size) + "x" +
                         std::to_string(size));
  if (masks.rank() != 4 || masks.dim(0) != frames.dim(0) || masks.dim(1) != 1 || masks.dim(2) != size ||
      masks.dim(3) != size)
    throw DimensionError(std::string(op) + ": masks must be [T,1,H,W] matching the frames");
}

}  // namespace speculens::detail
