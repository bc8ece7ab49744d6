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

#include <initializer_list>
#include <memory>
#include <vector>

#include "speculens/tensor.hpp"

namespace speculens::detail {

template <typename Scalar>
using NodePtrT = std::shared_ptr<Node<Scalar>>;

Index normalize_axis(Index axis, Index rank, const char* op);

struct Broadcast {
  Shape out;
  std::vector<Index> a_strides, b_strides;
  bool same = false;
  bool a_scalar = false;
  bool b_scalar = false;
};

Broadcast broadcast_plan(const Shape& a, const Shape& b, const char* op);

// Output node; joins the tape iff any parent is on it.
template <typename Scalar>
NodePtrT<Scalar> make_result_v(Shape shape, std::vector<Scalar> value, std::vector<NodePtrT<Scalar>> parents) {
  auto n = std::make_shared<Node<Scalar>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p && p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

template <typename Scalar>
NodePtrT<Scalar> make_result(Shape shape, std::vector<Scalar> value, std::initializer_list<NodePtrT<Scalar>> parents) {
  return make_result_v<Scalar>(std::move(shape), std::move(value), std::vector<NodePtrT<Scalar>>(parents));
}

}  // namespace speculens::detail
