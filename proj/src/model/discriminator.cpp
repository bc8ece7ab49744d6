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

#include "model_internal.hpp"
#include "speculens/sttn.hpp"

namespace speculens {

template <typename Scalar>
Discriminator<Scalar>::Discriminator(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  detail::add_conv(params_, "disc.0", cfg_.disc_width1, 3, 3, rng);
  detail::add_conv(params_, "disc.1", cfg_.disc_width2, cfg_.disc_width1, 3, rng);
  detail::add_conv(params_, "disc.temporal", cfg_.disc_width2, 3 * cfg_.disc_width2, 1, rng);
  detail::add_conv(params_, "disc.score", 1, cfg_.disc_width2, 3, rng);
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::score(const Tensor<Scalar>& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != 3) throw DimensionError("discriminator: frames must be [T,3,H,W]");
  if (frames.dim(2) % 4 != 0 || frames.dim(3) % 4 != 0)
    throw DimensionError("discriminator: frame size must be a multiple of 4");
  const Scalar slope = Scalar(0.2);
  const Tensor<Scalar> x = add_scalar(scale(frames, Scalar(2)), Scalar(-1));
  Tensor<Scalar> f = leaky_relu(detail::conv(params_, "disc.0", x, 2, 1), slope);
  f = leaky_relu(detail::conv(params_, "disc.1", f, 2, 1), slope);
  // Each frame sees its neighbours; the sequence ends repeat.
  const Index t_count = f.dim(0);
  std::vector<Index> prev(static_cast<std::size_t>(t_count)), next(static_cast<std::size_t>(t_count));
  for (Index t = 0; t < t_count; ++t) {
    prev[static_cast<std::size_t>(t)] = std::max<Index>(0, t - 1);
    next[static_cast<std::size_t>(t)] = std::min<Index>(t_count - 1, t + 1);
  }
  f = concat<Scalar>({index_select(f, 0, prev), f, index_select(f, 0, next)}, 1);
  f = leaky_relu(detail::conv(params_, "disc.temporal", f, 1, 0), slope);
  return detail::conv(params_, "disc.score", f, 1, 1);
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace speculens
