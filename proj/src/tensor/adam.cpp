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

#include <cmath>

#include <spdlog/spdlog.h>

#include "speculens/tensor.hpp"

namespace speculens {

template <typename Scalar>
bool adam_step(std::span<Tensor<Scalar>> params, AdamState<Scalar>& state, const AdamConfig<Scalar>& cfg) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(static_cast<std::size_t>(p.numel()), Scalar(0));
      state.second_moment.emplace_back(static_cast<std::size_t>(p.numel()), Scalar(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (static_cast<Index>(state.first_moment[k].size()) != params[k].numel()) {
      throw DimensionError("adam_step: state/parameter size mismatch at tensor " + std::to_string(k));
    }
    for (Scalar g : params[k].grad()) {
      if (!std::isfinite(g)) {
        spdlog::warn("adam_step: non-finite gradient in parameter {}, step skipped", k);
        return false;
      }
    }
  }

  ++state.step;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar c1 = Scalar(1) - std::pow(cfg.beta1, t);
  const Scalar c2 = Scalar(1) - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto grads = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Scalar g = grads[i];
      m[i] = cfg.beta1 * m[i] + (Scalar(1) - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (Scalar(1) - cfg.beta2) * g * g;
      const Scalar m_hat = m[i] / c1;
      const Scalar v_hat = v[i] / c2;
      values[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  return true;
}

template bool adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, const AdamConfig<float>&);
template bool adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, const AdamConfig<double>&);

}  // namespace speculens
