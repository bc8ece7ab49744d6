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
#include <string>

#include "speculens/sttn.hpp"

namespace speculens {

void SamplingConfig::validate() const {
  if (neighbor_radius < 0) throw ConfigError("train.neighbor_radius must be >= 0");
  if (distant_stride < 1) throw ConfigError("train.distant_stride must be >= 1");
}

std::vector<int> window_indices(int length, int t_center, const SamplingConfig& sampling, bool single_frame) {
  sampling.validate();
  if (length < 1) throw ParameterError("window_indices: empty sequence");
  if (t_center < 0 || t_center >= length)
    throw ParameterError("window_indices: t_center " + std::to_string(t_center) + " outside [0, " +
                         std::to_string(length) + ")");
  if (single_frame) return {t_center};
  std::vector<int> out;
  for (int t = 0; t < length; t += sampling.distant_stride) out.push_back(t);
  const int lo = std::max(0, t_center - sampling.neighbor_radius);
  const int hi = std::min(length - 1, t_center + sampling.neighbor_radius);
  for (int t = lo; t <= hi; ++t) out.push_back(t);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void LossWeights::validate() const {
  if (!(hole >= 0.0)) throw ConfigError("train.lambda_hole must be >= 0");
  if (!(valid >= 0.0)) throw ConfigError("train.lambda_valid must be >= 0");
  if (!(adv >= 0.0)) throw ConfigError("train.lambda_adv must be >= 0");
}

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("model.channels must be >= 1");
  if (layers < 1) throw ConfigError("model.layers must be >= 1");
  if (heads.empty()) throw ConfigError("model.heads must not be empty");
  if (channels % static_cast<Index>(heads.size()) != 0)
    throw ConfigError("model.channels (" + std::to_string(channels) + ") must be divisible by the head count (" +
                      std::to_string(heads.size()) + ")");
  if (encoder_width1 < 1 || encoder_width2 < 1) throw ConfigError("model.encoder_width must be >= 1");
  if (decoder_width < 1) throw ConfigError("model.decoder_width must be >= 1");
  if (disc_width1 < 1 || disc_width2 < 1) throw ConfigError("model.disc_width must be >= 1");
  if (image_size < 4 || image_size % 4 != 0) throw ConfigError("model.image_size must be a positive multiple of 4");
  const Index f = feature_size();
  for (const auto& h : heads) {
    if (h.patch_r1 < 1 || h.patch_r2 < 1 || f % h.patch_r1 != 0 || f % h.patch_r2 != 0)
      throw ConfigError("model.heads: patch " + std::to_string(h.patch_r1) + "x" + std::to_string(h.patch_r2) +
                        " does not divide the " + std::to_string(f) + "x" + std::to_string(f) + " feature map");
  }
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::add(std::string name, Tensor<Scalar> value) {
  if (contains(name)) throw ParameterError("duplicate parameter " + name);
  value.set_requires_grad(true);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return tensors_.back();
}

template <typename Scalar>
const Tensor<Scalar>& ParameterSet<Scalar>::get(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ParameterError("unknown parameter " + name);
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

template <typename Scalar>
Tensor<Scalar>& ParameterSet<Scalar>::get(const std::string& name) {
  return const_cast<Tensor<Scalar>&>(std::as_const(*this).get(name));
}

template <typename Scalar>
bool ParameterSet<Scalar>::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

template <typename Scalar>
Index ParameterSet<Scalar>::numel() const {
  Index n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace speculens
