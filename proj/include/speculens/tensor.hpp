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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "speculens/errors.hpp"

namespace speculens {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grad buffers.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Scalar(0));
  }
};

}  // namespace detail

/// Dense row-major n-d array taking part in a reverse-mode tape.
///
/// Copies share storage (handle semantics). Values are treated as immutable
/// once an op has produced them; only parameter leaves are updated in place by
/// the optimizer. A tensor participates in the tape when it is a leaf created
/// with requires_grad, or when any of its inputs does.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, std::vector<Scalar> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(Scalar v) { return Tensor(Shape{}, std::vector<Scalar>{v}); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<Scalar> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  /// Size of an axis; negative axes count from the end.
  Index dim(Index axis) const;
  Index numel() const { return static_cast<Index>(node_->value.size()); }

  std::span<const Scalar> values() const { return node_->value; }
  /// In-place access for optimizers and initializers. Do not use on tensors
  /// that other recorded ops still depend on.
  std::span<Scalar> mutable_values() { return node_->value; }
  Scalar item() const;
  Scalar at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  /// Gradient buffer; all zeros when nothing has been accumulated.
  std::span<const Scalar> grad() const;
  void zero_grad();

  /// Same values, cut off from the tape.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  NodePtr node_;
};

/// Reverse pass from a single-element tensor. Leaves that requires_grad get
/// d(loss)/d(leaf) accumulated into their grad buffers.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

// Elementwise arithmetic with numpy-style broadcasting.
template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Throws ParameterError on any zero divisor.
template <typename Scalar> Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Division where zero divisors yield zero.
template <typename Scalar> Tensor<Scalar> div_guarded(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar c);
template <typename Scalar> Tensor<Scalar> leaky_relu(const Tensor<Scalar>& a, Scalar slope);
template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> tanh(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> abs(const Tensor<Scalar>& a);

/// While a trace is installed, leaky_relu, relu and abs append one byte per
/// input element telling which side of the kink it fell on. Per thread; pass
/// nullptr to stop recording.
void set_branch_trace(std::vector<std::uint8_t>* trace);

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& a);

template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape);
/// Swaps the last two axes.
template <typename Scalar> Tensor<Scalar> transpose(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis);
template <typename Scalar> Tensor<Scalar> slice(const Tensor<Scalar>& a, Index axis, Index start, Index count);
template <typename Scalar>
Tensor<Scalar> index_select(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& indices);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Numerically stable softmax. Entries equal to -inf get weight 0; a slice
/// made only of -inf entries yields all zeros.
template <typename Scalar> Tensor<Scalar> softmax(const Tensor<Scalar>& a, Index axis);

/// Sets entries along the last axis to `fill` wherever keep[j] is false.
/// No gradient flows to the replaced entries.
template <typename Scalar>
Tensor<Scalar> mask_last_axis(const Tensor<Scalar>& a, const std::vector<bool>& keep, Scalar fill);

/// Cross-correlation. input [N,C,H,W], weight [O,C,kh,kw], bias [O] or undefined.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Index stride, Index padding);

template <typename Scalar> Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& input, Index factor);

/// [N,C,H,W] -> [N, (H/r1)*(W/r2), r1*r2*C]; patches in row-major grid order,
/// each flattened as (channel, row, column).
template <typename Scalar> Tensor<Scalar> patch_extract(const Tensor<Scalar>& input, Index r1, Index r2);
/// Inverse of patch_extract.
template <typename Scalar>
Tensor<Scalar> patch_fold(const Tensor<Scalar>& patches, Index channels, Index height, Index width,
                          Index r1, Index r2);

/// Adaptive-moment optimizer settings. Defaults follow the training recipe
/// (lr 1e-4, betas 0.0 / 0.99).
template <typename Scalar>
struct AdamConfig {
  Scalar lr = Scalar(1e-4);
  Scalar beta1 = Scalar(0.0);
  Scalar beta2 = Scalar(0.99);
  Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
struct AdamState {
  std::vector<std::vector<Scalar>> first_moment;
  std::vector<std::vector<Scalar>> second_moment;
  long long step = 0;
};

/// One bias-corrected Adam update using each parameter's grad buffer.
/// Returns false, leaving params and state untouched, if any gradient is
/// non-finite.
template <typename Scalar>
bool adam_step(std::span<Tensor<Scalar>> params, AdamState<Scalar>& state, const AdamConfig<Scalar>& cfg);

// Operator sugar.
template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }

}  // namespace speculens
