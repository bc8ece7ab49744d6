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

namespace {

template <typename Scalar>
void check_pair(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& masks,
                const char* op) {
  if (target.shape() != predicted.shape())
    throw DimensionError(std::string(op) + ": target " + shape_string(target.shape()) + " vs prediction " +
                         shape_string(predicted.shape()));
  if (target.rank() != 4 || masks.rank() != 4 || masks.dim(1) != 1 || masks.dim(0) != target.dim(0) ||
      masks.dim(2) != target.dim(2) || masks.dim(3) != target.dim(3))
    throw DimensionError(std::string(op) + ": masks " + shape_string(masks.shape()) + " do not match " +
                         shape_string(target.shape()));
}

template <typename Scalar>
Tensor<Scalar> region_l1(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& region) {
  Scalar count = 0;
  for (const Scalar m : region.values()) count += m;
  count *= static_cast<Scalar>(target.dim(1));
  if (count == Scalar(0)) return Tensor<Scalar>::scalar(Scalar(0));
  return scale(sum(abs(mul(region, sub(target, predicted)))), Scalar(1) / count);
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> loss_hole(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& masks) {
  check_pair(target, predicted, masks, "loss_hole");
  return region_l1(target, predicted, masks.detach());
}

template <typename Scalar>
Tensor<Scalar> loss_valid(const Tensor<Scalar>& target, const Tensor<Scalar>& predicted, const Tensor<Scalar>& masks) {
  check_pair(target, predicted, masks, "loss_valid");
  return region_l1(target, predicted, add_scalar(scale(masks.detach(), Scalar(-1)), Scalar(1)));
}

template <typename Scalar>
Tensor<Scalar> loss_adv_generator(const Tensor<Scalar>& fake_scores) {
  return scale(mean(fake_scores), Scalar(-1));
}

template <typename Scalar>
Tensor<Scalar> hinge_real(const Tensor<Scalar>& real_scores) {
  return mean(relu(add_scalar(scale(real_scores, Scalar(-1)), Scalar(1))));
}

template <typename Scalar>
Tensor<Scalar> hinge_fake(const Tensor<Scalar>& fake_scores) {
  return mean(relu(add_scalar(fake_scores, Scalar(1))));
}

template <typename Scalar>
Tensor<Scalar> loss_discriminator(const Tensor<Scalar>& real_scores, const Tensor<Scalar>& fake_scores) {
  return add(hinge_real(real_scores), hinge_fake(fake_scores));
}

template <typename Scalar>
Tensor<Scalar> total_loss(const Tensor<Scalar>& hole, const Tensor<Scalar>& valid, const Tensor<Scalar>& adv,
                          const LossWeights& w) {
  return add(add(scale(hole, static_cast<Scalar>(w.hole)), scale(valid, static_cast<Scalar>(w.valid))),
             scale(adv, static_cast<Scalar>(w.adv)));
}

double total_loss(double hole, double valid, double adv, const LossWeights& w) {
  return w.hole * hole + w.valid * valid + w.adv * adv;
}

template <typename Scalar>
Tensor<Scalar> composite(const Tensor<Scalar>& frames, const Tensor<Scalar>& masks, const Tensor<Scalar>& predicted) {
  check_pair(frames, predicted, masks, "composite");
  const auto x = frames.values(), m = masks.values(), y = predicted.values();
  const Index t_count = frames.dim(0), c = frames.dim(1), plane = frames.dim(2) * frames.dim(3);
  std::vector<Scalar> out(x.size());
  for (Index t = 0; t < t_count; ++t)
    for (Index ch = 0; ch < c; ++ch)
      for (Index i = 0; i < plane; ++i) {
        const auto k = static_cast<std::size_t>((t * c + ch) * plane + i);
        const Scalar mv = m[static_cast<std::size_t>(t * plane + i)];
        out[k] = mv * y[k] + (Scalar(1) - mv) * x[k];
      }
  return Tensor<Scalar>(frames.shape(), std::move(out));
}

Frame composite(const Frame& frame, const Mask& mask, const Frame& predicted) {
  if (frame.height() != mask.rows() || frame.width() != mask.cols() || predicted.height() != frame.height() ||
      predicted.width() != frame.width())
    throw DimensionError("composite: frame, mask and prediction sizes differ");
  Frame out = frame;
  for (int c = 0; c < 3; ++c) out[c] = (mask != 0).select(predicted[c], frame[c]);
  return out;
}

template <typename Scalar>
Tensor<Scalar> frames_to_tensor(const std::vector<Frame>& frames, const std::vector<int>& indices) {
  if (indices.empty()) throw ParameterError("frames_to_tensor: no frames selected");
  const Frame& first = frames.at(static_cast<std::size_t>(indices.front()));
  const Index h = first.height(), w = first.width();
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(indices.size() * 3 * h * w));
  for (const int i : indices) {
    const Frame& f = frames.at(static_cast<std::size_t>(i));
    if (f.height() != h || f.width() != w) throw DimensionError("frames_to_tensor: frame sizes differ");
    for (int c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) out.push_back(static_cast<Scalar>(f[c](y, x)));
  }
  return Tensor<Scalar>(Shape{static_cast<Index>(indices.size()), 3, h, w}, std::move(out));
}

template <typename Scalar>
Tensor<Scalar> masks_to_tensor(const std::vector<Mask>& masks, const std::vector<int>& indices) {
  if (indices.empty()) throw ParameterError("masks_to_tensor: no masks selected");
  const Mask& first = masks.at(static_cast<std::size_t>(indices.front()));
  const Index h = first.rows(), w = first.cols();
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(indices.size() * h * w));
  for (const int i : indices) {
    const Mask& m = masks.at(static_cast<std::size_t>(i));
    if (m.rows() != h || m.cols() != w) throw DimensionError("masks_to_tensor: mask sizes differ");
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) out.push_back(m(y, x) != 0 ? Scalar(1) : Scalar(0));
  }
  return Tensor<Scalar>(Shape{static_cast<Index>(indices.size()), 1, h, w}, std::move(out));
}

template <typename Scalar>
Frame tensor_to_frame(const Tensor<Scalar>& frames, Index t) {
  if (frames.rank() != 4 || frames.dim(1) != 3) throw DimensionError("tensor_to_frame: expected [T,3,H,W]");
  if (t < 0 || t >= frames.dim(0)) throw ParameterError("tensor_to_frame: frame index out of range");
  const Index h = frames.dim(2), w = frames.dim(3);
  const auto v = frames.values();
  Frame out(h, w);
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        out[c](y, x) = std::clamp(static_cast<double>(v[static_cast<std::size_t>(((t * 3 + c) * h + y) * w + x)]), 0.0, 1.0);
  return out;
}

#define SPECULENS_INSTANTIATE_LOSS(S)                                                                         \
  template Tensor<S> loss_hole<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> loss_valid<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> loss_adv_generator<S>(const Tensor<S>&);                                                 \
  template Tensor<S> hinge_real<S>(const Tensor<S>&);                                                         \
  template Tensor<S> hinge_fake<S>(const Tensor<S>&);                                                         \
  template Tensor<S> loss_discriminator<S>(const Tensor<S>&, const Tensor<S>&);                               \
  template Tensor<S> total_loss<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const LossWeights&); \
  template Tensor<S> composite<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> frames_to_tensor<S>(const std::vector<Frame>&, const std::vector<int>&);                 \
  template Tensor<S> masks_to_tensor<S>(const std::vector<Mask>&, const std::vector<int>&);                   \
  template Frame tensor_to_frame<S>(const Tensor<S>&, Index);

SPECULENS_INSTANTIATE_LOSS(float)
SPECULENS_INSTANTIATE_LOSS(double)

}  // namespace speculens
